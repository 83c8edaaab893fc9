#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "ockd/common.hpp"

namespace ockd {

// Per-conv-layer partition of weight indices into active (A_m) and inactive
// (B_m) sets. Biases and normalization parameters stay dense.
struct SparsityMask {
  struct Layer {
    std::vector<std::uint8_t> active;  // flag per weight entry
    std::uint32_t active_count = 0;

    std::uint32_t size() const {
      return static_cast<std::uint32_t>(active.size());
    }
    std::vector<std::uint32_t> active_indices() const {
      std::vector<std::uint32_t> out;
      out.reserve(active_count);
      for (std::uint32_t i = 0; i < active.size(); ++i)
        if (active[i]) out.push_back(i);
      return out;
    }
    std::vector<std::uint32_t> inactive_indices() const {
      std::vector<std::uint32_t> out;
      out.reserve(active.size() - active_count);
      for (std::uint32_t i = 0; i < active.size(); ++i)
        if (!active[i]) out.push_back(i);
      return out;
    }
  };

  std::vector<Layer> layers;
  double density = 1.0;

  bool partition_holds() const {
    for (const auto& l : layers) {
      std::uint32_t n = 0;
      for (auto f : l.active) n += (f != 0);
      if (n != l.active_count) return false;
    }
    return true;
  }
};

}  // namespace ockd
