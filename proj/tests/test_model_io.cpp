#include "doctest.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "ockd/model_io.hpp"
#include "ockd/sparse.hpp"
#include "test_helpers.hpp"

using namespace ockd;
using namespace ockd_test;

namespace {

struct TempDir {
  std::filesystem::path p;
  TempDir() {
    p = std::filesystem::temp_directory_path() /
        ("ockd_test_" + std::to_string(::getpid()) + "_" +
         std::to_string(counter()++));
    std::filesystem::create_directories(p);
  }
  ~TempDir() { std::filesystem::remove_all(p); }
  std::string file(const std::string& name) const { return (p / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::vector<char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("dense round-trip is bitwise for extractor and fcb kinds") {
  TempDir tmp;
  auto arch = tiny_extractor_arch();
  auto net = build_network<float>(arch, kImageChannels, 3);
  const auto path = tmp.file("teacher.ockd");
  save_model(net, arch, kImageChannels, ModelKind::teacher_extractor, path);

  auto loaded = load_model(path);
  CHECK(loaded.info.kind == ModelKind::teacher_extractor);
  CHECK_FALSE(loaded.mask.has_value());
  CHECK(loaded.params.bitwise_equal(net));

  // save -> load -> save is bitwise stable on disk
  const auto path2 = tmp.file("teacher2.ockd");
  save_model(loaded.params, loaded.info.arch, loaded.info.in_channels,
             loaded.info.kind, path2);
  CHECK(slurp(path) == slurp(path2));

  auto fcb = tiny_fcb_arch();
  auto head = build_network<float>(fcb, 9, 4);
  ExtractorArch fcb_as_block{{fcb.layers, 1}};
  const auto hpath = tmp.file("fcb.ockd");
  save_model(head, fcb_as_block, 9, ModelKind::teacher_fcb, hpath);
  auto hloaded = load_model(hpath);
  CHECK(hloaded.params.bitwise_equal(head));
  CHECK(hloaded.info.kind == ModelKind::teacher_fcb);
}

TEST_CASE("sparse round-trip restores weights and mask exactly") {
  TempDir tmp;
  auto arch = tiny_extractor_arch();
  for (double density : {1.0, 0.1, 0.01}) {
    auto net = build_network<float>(arch, kImageChannels,
                                    static_cast<std::uint64_t>(density * 100));
    auto mask = init_masks(net, density);
    const auto path = tmp.file("student.ockd");
    save_model(net, arch, kImageChannels, ModelKind::student, path, &mask,
               static_cast<float>(density));

    auto loaded = load_model(path);
    REQUIRE(loaded.mask.has_value());
    CHECK(loaded.params.bitwise_equal(net));
    CHECK(loaded.info.density == doctest::Approx(density));
    for (std::size_t l = 0; l < mask.layers.size(); ++l) {
      CHECK(loaded.mask->layers[l].active == mask.layers[l].active);
      CHECK(loaded.mask->layers[l].active_count ==
            mask.layers[l].active_count);
    }

    const auto path2 = tmp.file("student2.ockd");
    save_model(loaded.params, loaded.info.arch, loaded.info.in_channels,
               ModelKind::student, path2, &*loaded.mask, loaded.info.density);
    CHECK(slurp(path) == slurp(path2));
  }
}

TEST_CASE("payload size equals the layer-table prediction") {
  TempDir tmp;
  auto arch = tiny_extractor_arch();
  auto net = build_network<float>(arch, kImageChannels, 5);

  const auto dense_path = tmp.file("dense.ockd");
  save_model(net, arch, kImageChannels, ModelKind::teacher_extractor,
             dense_path);
  auto dinfo = inspect_model(dense_path);
  CHECK(std::filesystem::file_size(dense_path) ==
        dinfo.header_bytes + dinfo.predicted_payload_bytes());
  // dense layer of n floats contributes 4n bytes
  std::uint64_t w_bytes = 0;
  for (const auto& e : dinfo.table) w_bytes += e.w_numel * 4;
  CHECK(dinfo.predicted_payload_bytes() >= w_bytes);

  auto mask = init_masks(net, 0.1);
  const auto sparse_path = tmp.file("sparse.ockd");
  save_model(net, arch, kImageChannels, ModelKind::student, sparse_path, &mask,
             0.1f);
  auto sinfo = inspect_model(sparse_path);
  CHECK(std::filesystem::file_size(sparse_path) ==
        sinfo.header_bytes + sinfo.predicted_payload_bytes());
  // sparse layer with nnz entries contributes 8*nnz bytes of weights
  for (std::size_t l = 0; l < sinfo.table.size(); ++l)
    CHECK(sinfo.table[l].nnz == mask.layers[l].active_count);

  // a fully active student layer falls back to dense 4-byte storage
  auto full = init_masks(net, 1.0);
  const auto full_path = tmp.file("full.ockd");
  save_model(net, arch, kImageChannels, ModelKind::student, full_path, &full,
             1.0f);
  auto finfo = inspect_model(full_path);
  CHECK(std::filesystem::file_size(full_path) ==
        finfo.header_bytes + finfo.predicted_payload_bytes());
  CHECK(std::filesystem::file_size(full_path) ==
        std::filesystem::file_size(dense_path));  // same payload as dense
}

TEST_CASE("file size shrinks as density drops") {
  TempDir tmp;
  auto arch = tiny_extractor_arch();
  auto net = build_network<float>(arch, kImageChannels, 5);
  std::vector<std::uintmax_t> sizes;
  for (double density : {1.0, 0.1, 0.01}) {
    auto mask = init_masks(net, density);
    const auto path = tmp.file("d.ockd");
    save_model(net, arch, kImageChannels, ModelKind::student, path, &mask,
               static_cast<float>(density));
    sizes.push_back(std::filesystem::file_size(path));
  }
  CHECK(sizes[1] < sizes[0]);
  CHECK(sizes[2] < sizes[1]);
}

TEST_CASE("kind/mask contract on save") {
  TempDir tmp;
  auto arch = tiny_extractor_arch();
  auto net = build_network<float>(arch, kImageChannels, 5);
  auto mask = init_masks(net, 0.5);
  CHECK_THROWS_AS(save_model(net, arch, kImageChannels, ModelKind::student,
                             tmp.file("x.ockd")),
                  contract_error);
  CHECK_THROWS_AS(
      save_model(net, arch, kImageChannels, ModelKind::teacher_extractor,
                 tmp.file("x.ockd"), &mask),
      contract_error);
}

TEST_CASE("malformed files are rejected") {
  TempDir tmp;
  auto arch = tiny_extractor_arch();
  auto net = build_network<float>(arch, kImageChannels, 5);
  const auto path = tmp.file("m.ockd");
  save_model(net, arch, kImageChannels, ModelKind::teacher_extractor, path);

  auto bytes = slurp(path);

  // bad magic
  auto bad = bytes;
  bad[0] = 'X';
  std::ofstream(tmp.file("bad.ockd"), std::ios::binary)
      .write(bad.data(), static_cast<std::streamsize>(bad.size()));
  CHECK_THROWS_AS(load_model(tmp.file("bad.ockd")), format_error);

  // bad version
  bad = bytes;
  bad[4] = 99;
  std::ofstream(tmp.file("ver.ockd"), std::ios::binary)
      .write(bad.data(), static_cast<std::streamsize>(bad.size()));
  CHECK_THROWS_AS(load_model(tmp.file("ver.ockd")), format_error);

  // truncated payload
  bad = bytes;
  bad.resize(bad.size() - 10);
  std::ofstream(tmp.file("tr.ockd"), std::ios::binary)
      .write(bad.data(), static_cast<std::streamsize>(bad.size()));
  CHECK_THROWS_AS(load_model(tmp.file("tr.ockd")), format_error);

  // trailing junk
  bad = bytes;
  bad.push_back('z');
  std::ofstream(tmp.file("tl.ockd"), std::ios::binary)
      .write(bad.data(), static_cast<std::streamsize>(bad.size()));
  CHECK_THROWS_AS(load_model(tmp.file("tl.ockd")), corruption_error);

  CHECK_THROWS_AS(load_model(tmp.file("missing.ockd")), io_error);
}

TEST_CASE("nnz mismatch against the layer table is a corruption error") {
  TempDir tmp;
  auto arch = tiny_extractor_arch();
  auto net = build_network<float>(arch, kImageChannels, 5);
  auto mask = init_masks(net, 0.1);
  const auto path = tmp.file("s.ockd");
  save_model(net, arch, kImageChannels, ModelKind::student, path, &mask, 0.1f);

  auto info = inspect_model(path);
  auto bytes = slurp(path);
  // bump the first layer's declared nnz by one; payload no longer matches
  const std::size_t table_off =
      info.header_bytes - info.table.size() * 16 + 8;
  std::uint64_t nnz;
  std::memcpy(&nnz, bytes.data() + table_off, 8);
  ++nnz;
  std::memcpy(bytes.data() + table_off, &nnz, 8);
  std::ofstream(tmp.file("c.ockd"), std::ios::binary)
      .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_AS(load_model(tmp.file("c.ockd")), format_error);
}
