#pragma once

#include <cstdint>
#include <vector>

#include "ockd/net.hpp"

namespace ockd {

enum class Split { train, validation, test };

inline constexpr int kGenuine = 0;
inline constexpr int kAttack = 1;

template <typename T>
struct Sample {
  Tensor<T> image;  // (3, 128, 128)
  int label = kGenuine;
  Split split = Split::train;
  std::uint64_t id = 0;  // globally unique; used for split-hygiene checks
  int client = -1;
};

template <typename T>
using Dataset = std::vector<Sample<T>>;

template <typename T>
ImageBatch<T> make_batch(const Dataset<T>& data,
                         const std::vector<std::size_t>& indices) {
  require(!indices.empty(), "make_batch: empty index list");
  const int n = static_cast<int>(indices.size());
  ImageBatch<T> b;
  b.data = Tensor<T>({n, kImageChannels, kImageSize, kImageSize});
  b.labels.resize(indices.size());
  const std::int64_t chw =
      static_cast<std::int64_t>(kImageChannels) * kImageSize * kImageSize;
  for (int i = 0; i < n; ++i) {
    const auto& s = data[indices[i]];
    std::copy(s.image.v.begin(), s.image.v.end(), b.data.v.begin() + i * chw);
    b.labels[static_cast<std::size_t>(i)] = s.label;
  }
  return b;
}

template <typename T>
Dataset<T> filter(const Dataset<T>& data, Split split, int label = -1) {
  Dataset<T> out;
  for (const auto& s : data)
    if (s.split == split && (label < 0 || s.label == label)) out.push_back(s);
  return out;
}

}  // namespace ockd
