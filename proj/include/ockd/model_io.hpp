#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ockd/net.hpp"
#include "ockd/sparse_mask.hpp"

namespace ockd {

// On-disk model container. Layout, all little-endian:
//   magic "OCKD" | version u32 | kind u32 | index width u32 | density f32
//   | in_channels u32 | block count u32
//   | per block: downsample u32, layer count u32,
//       per layer: out_channels u32, kernel u32, stride u32, norm u8, relu u8
//   | layer table: per conv layer, w numel u64 + stored nnz u64
//   | payload: per layer, the weight tensor (dense f32, or sorted
//     (u32 flat index, f32 value) records when nnz < numel), then bias and,
//     for normalized layers, gamma/beta/running mean/running var as f32.

enum class ModelKind : std::uint32_t {
  teacher_extractor = 0,
  teacher_fcb = 1,
  student = 2,
};

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr char kModelMagic[4] = {'O', 'C', 'K', 'D'};

struct LayerTableEntry {
  std::uint64_t w_numel = 0;
  std::uint64_t nnz = 0;  // == w_numel for a densely stored layer
  bool has_bn = false;
  std::uint64_t out_channels = 0;

  std::uint64_t payload_bytes() const {
    const std::uint64_t w = nnz < w_numel ? nnz * 8 : w_numel * 4;
    return w + out_channels * 4 * (has_bn ? 5 : 1);
  }
};

struct ModelInfo {
  std::uint32_t version = 0;
  ModelKind kind = ModelKind::teacher_extractor;
  std::uint32_t index_width = 32;
  float density = 1.0f;
  int in_channels = 0;
  ExtractorArch arch;  // fcb models use a single block with downsample 1
  std::vector<LayerTableEntry> table;
  std::uint64_t header_bytes = 0;

  std::uint64_t predicted_payload_bytes() const {
    std::uint64_t n = 0;
    for (const auto& e : table) n += e.payload_bytes();
    return n;
  }
};

namespace detail {

struct Writer {
  std::ofstream f;
  std::uint64_t written = 0;
  explicit Writer(const std::string& path)
      : f(path, std::ios::binary | std::ios::trunc) {
    if (!f) throw io_error("cannot open for writing: " + path);
  }
  void bytes(const void* p, std::size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    written += n;
  }
  void u8(std::uint8_t x) { bytes(&x, 1); }
  void u32(std::uint32_t x) { bytes(&x, 4); }
  void u64(std::uint64_t x) { bytes(&x, 8); }
  void f32(float x) { bytes(&x, 4); }
  void close(const std::string& path) {
    f.flush();
    if (!f) throw io_error("write failed: " + path);
    f.close();
  }
};

struct Reader {
  std::ifstream f;
  std::string path;
  explicit Reader(const std::string& p)
      : f(p, std::ios::binary), path(p) {
    if (!f) throw io_error("cannot open for reading: " + p);
  }
  void bytes(void* p, std::size_t n) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (f.gcount() != static_cast<std::streamsize>(n))
      throw format_error("truncated model file: " + path);
  }
  std::uint8_t u8() {
    std::uint8_t x;
    bytes(&x, 1);
    return x;
  }
  std::uint32_t u32() {
    std::uint32_t x;
    bytes(&x, 4);
    return x;
  }
  std::uint64_t u64() {
    std::uint64_t x;
    bytes(&x, 8);
    return x;
  }
  float f32() {
    float x;
    bytes(&x, 4);
    return x;
  }
  bool at_eof() {
    f.peek();
    return f.eof();
  }
};

inline void write_f32_span(Writer& w, const std::vector<float>& v) {
  if (!v.empty()) w.bytes(v.data(), v.size() * 4);
}

inline void read_f32_span(Reader& r, std::vector<float>& v) {
  if (!v.empty()) r.bytes(v.data(), v.size() * 4);
}

inline void write_arch(Writer& w, const ExtractorArch& arch) {
  w.u32(static_cast<std::uint32_t>(arch.size()));
  for (const auto& b : arch) {
    w.u32(static_cast<std::uint32_t>(b.downsample));
    w.u32(static_cast<std::uint32_t>(b.layers.size()));
    for (const auto& l : b.layers) {
      w.u32(static_cast<std::uint32_t>(l.out_channels));
      w.u32(static_cast<std::uint32_t>(l.kernel));
      w.u32(static_cast<std::uint32_t>(l.stride));
      w.u8(l.normalization ? 1 : 0);
      w.u8(l.nonlinearity ? 1 : 0);
    }
  }
}

inline ExtractorArch read_arch(Reader& r) {
  ExtractorArch arch;
  const std::uint32_t blocks = r.u32();
  if (blocks == 0 || blocks > 64)
    throw format_error("implausible block count in model header");
  for (std::uint32_t b = 0; b < blocks; ++b) {
    ConvBlockSpec spec;
    spec.downsample = static_cast<int>(r.u32());
    const std::uint32_t layers = r.u32();
    if (layers == 0 || layers > 64)
      throw format_error("implausible layer count in model header");
    for (std::uint32_t l = 0; l < layers; ++l) {
      ConvLayerSpec ls;
      ls.out_channels = static_cast<int>(r.u32());
      ls.kernel = static_cast<int>(r.u32());
      ls.stride = static_cast<int>(r.u32());
      ls.normalization = r.u8() != 0;
      ls.nonlinearity = r.u8() != 0;
      spec.layers.push_back(ls);
    }
    arch.push_back(spec);
  }
  validate_arch(arch);
  return arch;
}

}  // namespace detail

// Teacher components are dense; student saves require the sparsity mask and
// store only active entries in coordinate format.
inline void save_model(const ParamSet<float>& params, const ExtractorArch& arch,
                       int in_channels, ModelKind kind, const std::string& path,
                       const SparsityMask* mask = nullptr,
                       float density = 1.0f) {
  if (kind == ModelKind::student && mask == nullptr)
    throw contract_error("student models must be saved with their mask");
  if (kind != ModelKind::student && mask != nullptr)
    throw contract_error("teacher models are dense; no mask expected");
  if (mask && mask->layers.size() != params.layers.size())
    throw contract_error("mask/parameter layer count mismatch");

  detail::Writer w(path);
  w.bytes(kModelMagic, 4);
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(kind));
  w.u32(32);  // coordinate index width
  w.f32(density);
  w.u32(static_cast<std::uint32_t>(in_channels));
  detail::write_arch(w, arch);

  // layer table
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& p = params.layers[l];
    w.u64(static_cast<std::uint64_t>(p.w.numel()));
    w.u64(mask ? static_cast<std::uint64_t>(mask->layers[l].active_count)
               : static_cast<std::uint64_t>(p.w.numel()));
  }

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& p = params.layers[l];
    // coordinate records only pay off below full occupancy; a layer with
    // every entry active is stored densely, matching the table's size rule
    const bool coo = mask && mask->layers[l].active_count < p.w.v.size();
    if (coo) {
      for (std::size_t i = 0; i < p.w.v.size(); ++i)
        if (mask->layers[l].active[i]) {
          w.u32(static_cast<std::uint32_t>(i));
          w.f32(p.w.v[i]);
        }
    } else {
      detail::write_f32_span(w, p.w.v);
    }
    detail::write_f32_span(w, p.b.v);
    if (p.has_bn) {
      detail::write_f32_span(w, p.gamma.v);
      detail::write_f32_span(w, p.beta.v);
      detail::write_f32_span(w, p.run_mean.v);
      detail::write_f32_span(w, p.run_var.v);
    }
  }
  w.close(path);
}

struct LoadedModel {
  ModelInfo info;
  ParamSet<float> params;
  std::optional<SparsityMask> mask;
};

namespace detail {

inline ModelInfo read_header(Reader& r) {
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kModelMagic, 4) != 0)
    throw format_error("bad magic; not a model file: " + r.path);
  ModelInfo info;
  info.version = r.u32();
  if (info.version != kModelFormatVersion)
    throw format_error("unsupported model format version " +
                       std::to_string(info.version));
  const std::uint32_t kind = r.u32();
  if (kind > 2) throw format_error("unknown network kind in model header");
  info.kind = static_cast<ModelKind>(kind);
  info.index_width = r.u32();
  if (info.index_width != 32)
    throw format_error("unsupported coordinate index width");
  info.density = r.f32();
  info.in_channels = static_cast<int>(r.u32());
  info.arch = read_arch(r);

  const auto flat = flatten_layers(info.arch);
  for (const auto& l : flat) {
    LayerTableEntry e;
    e.has_bn = l.normalization;
    e.out_channels = static_cast<std::uint64_t>(l.out_channels);
    info.table.push_back(e);
  }
  for (auto& e : info.table) {
    e.w_numel = r.u64();
    e.nnz = r.u64();
    if (e.nnz > e.w_numel)
      throw format_error("layer table declares nnz above the tensor size");
  }
  info.header_bytes = static_cast<std::uint64_t>(r.f.tellg());
  return info;
}

}  // namespace detail

// Header-only parse; used to audit sizes without touching the payload.
inline ModelInfo inspect_model(const std::string& path) {
  detail::Reader r(path);
  return detail::read_header(r);
}

inline LoadedModel load_model(const std::string& path) {
  detail::Reader r(path);
  LoadedModel m;
  m.info = detail::read_header(r);

  // rebuild the parameter skeleton from the self-describing header
  m.params = build_network<float>(m.info.arch, m.info.in_channels, 0);
  if (m.params.layers.size() != m.info.table.size())
    throw format_error("layer table size disagrees with the architecture");
  const bool sparse = m.info.kind == ModelKind::student;
  if (sparse) {
    m.mask.emplace();
    m.mask->density = m.info.density;
    m.mask->layers.resize(m.params.layers.size());
  }

  for (std::size_t l = 0; l < m.params.layers.size(); ++l) {
    auto& p = m.params.layers[l];
    const auto& e = m.info.table[l];
    if (e.w_numel != static_cast<std::uint64_t>(p.w.numel()))
      throw corruption_error("layer table tensor size mismatch");
    if (sparse) {
      auto& ml = m.mask->layers[l];
      ml.active_count = static_cast<std::uint32_t>(e.nnz);
      if (e.nnz == e.w_numel) {  // fully active layer, stored densely
        ml.active.assign(p.w.v.size(), 1);
        detail::read_f32_span(r, p.w.v);
      } else {
        p.w.fill(0.0f);
        ml.active.assign(p.w.v.size(), 0);
        std::int64_t prev = -1;
        for (std::uint64_t i = 0; i < e.nnz; ++i) {
          const std::uint32_t idx = r.u32();
          const float val = r.f32();
          if (idx >= p.w.v.size())
            throw corruption_error("coordinate index outside the layer tensor");
          if (static_cast<std::int64_t>(idx) <= prev)
            throw corruption_error("coordinate records not sorted by index");
          prev = idx;
          p.w.v[idx] = val;
          ml.active[idx] = 1;
        }
      }
    } else {
      if (e.nnz != e.w_numel)
        throw corruption_error(
            "dense model declares a sparse layer in its table");
      detail::read_f32_span(r, p.w.v);
    }
    detail::read_f32_span(r, p.b.v);
    if (p.has_bn) {
      detail::read_f32_span(r, p.gamma.v);
      detail::read_f32_span(r, p.beta.v);
      detail::read_f32_span(r, p.run_mean.v);
      detail::read_f32_span(r, p.run_var.v);
    }
  }
  if (!r.at_eof()) throw corruption_error("trailing bytes after the payload");
  return m;
}

}  // namespace ockd
