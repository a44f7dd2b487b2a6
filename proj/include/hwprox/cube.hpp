#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hwprox/errors.hpp"
#include "hwprox/tensor.hpp"

#include "json.hpp"

namespace hwprox {

static_assert(std::endian::native == std::endian::little,
              "cube file I/O assumes a little-endian host");

// Dense hyperspectral volume, height x width x bands, band-fastest layout:
// data[(i*width + j)*bands + k]. In memory everything is f64; on disk f32.
struct HsiCube {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t bands = 0;
  std::vector<double> data;

  HsiCube() = default;
  HsiCube(std::int64_t h, std::int64_t w, std::int64_t b, double fill = 0.0)
      : height(h), width(w), bands(b) {
    if (h <= 0 || w <= 0 || b <= 0) throw ArgumentError("cube dimensions must be positive");
    data.assign(static_cast<std::size_t>(h * w * b), fill);
  }

  std::int64_t numel() const { return height * width * bands; }

  double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data[static_cast<std::size_t>((i * width + j) * bands + k)];
  }
  double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data[static_cast<std::size_t>((i * width + j) * bands + k)];
  }

  bool same_shape(const HsiCube& o) const {
    return height == o.height && width == o.width && bands == o.bands;
  }

  void validate() const {
    if (height <= 0 || width <= 0 || bands <= 0)
      throw ArgumentError("cube dimensions must be positive");
    if (static_cast<std::int64_t>(data.size()) != numel())
      throw ArgumentError("cube data size inconsistent with dimensions");
    for (double x : data)
      if (!std::isfinite(x)) throw ArgumentError("cube contains non-finite values");
  }

  Tensor tensor() const { return Tensor({height, width, bands}, data); }
  static HsiCube from_tensor(const Tensor& t) {
    if (t.shape.size() != 3) throw ArgumentError("tensor is not cube-shaped");
    HsiCube c;
    c.height = t.shape[0];
    c.width = t.shape[1];
    c.bands = t.shape[2];
    c.data = t.v;
    return c;
  }
};

struct PatchPair {
  HsiCube noisy;
  HsiCube clean;
  std::string id;
};

struct ManifestEntry {
  std::string noisy;
  std::string clean;
  std::string case_tag;  // case1..case5 | custom
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
};

inline bool valid_case_tag(const std::string& tag) {
  return tag == "case1" || tag == "case2" || tag == "case3" || tag == "case4" ||
         tag == "case5" || tag == "custom";
}

// --- cube file I/O ------------------------------------------------------------
//
// Format (little-endian): magic "HWC1", u32 height, u32 width, u32 bands,
// then height*width*bands f32 values in the band-fastest layout above.

inline void save_cube(const HsiCube& cube, const std::filesystem::path& path) {
  cube.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write("HWC1", 4);
  const std::uint32_t dims[3] = {static_cast<std::uint32_t>(cube.height),
                                 static_cast<std::uint32_t>(cube.width),
                                 static_cast<std::uint32_t>(cube.bands)};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  std::vector<float> payload(cube.data.size());
  for (std::size_t i = 0; i < cube.data.size(); ++i)
    payload[i] = static_cast<float>(cube.data[i]);
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path.string());
}

inline HsiCube load_cube(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "HWC1", 4) != 0)
    throw FormatError("bad magic in " + path.string());
  std::uint32_t dims[3] = {};
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in) throw CorruptFileError("truncated header in " + path.string());
  const std::uint64_t h = dims[0], w = dims[1], b = dims[2];
  if (h == 0 || w == 0 || b == 0) throw CorruptFileError("zero dimension in " + path.string());
  const std::uint64_t limit = std::uint64_t{1} << 32;
  if (h > limit / w || (h * w) > limit / b)
    throw CorruptFileError("dimension product overflow in " + path.string());
  const std::uint64_t n = h * w * b;
  std::vector<float> payload(n);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (static_cast<std::uint64_t>(in.gcount()) != n * sizeof(float))
    throw CorruptFileError("truncated payload in " + path.string());
  HsiCube cube(static_cast<std::int64_t>(h), static_cast<std::int64_t>(w),
               static_cast<std::int64_t>(b));
  for (std::uint64_t i = 0; i < n; ++i) cube.data[i] = static_cast<double>(payload[i]);
  cube.validate();
  return cube;
}

// --- patch extraction ----------------------------------------------------------

// Anchor positions at stride spacing; the final anchor is pulled back so the
// last patch touches the boundary and no pixel is unreachable.
inline std::vector<std::int64_t> patch_anchors(std::int64_t extent, std::int64_t patch,
                                               std::int64_t stride) {
  std::vector<std::int64_t> anchors;
  for (std::int64_t a = 0; a + patch <= extent; a += stride) anchors.push_back(a);
  if (anchors.empty() || anchors.back() != extent - patch) anchors.push_back(extent - patch);
  return anchors;
}

inline std::vector<HsiCube> extract_patches(const HsiCube& cube, std::int64_t p_h,
                                            std::int64_t p_w, std::int64_t s_h,
                                            std::int64_t s_w) {
  if (p_h <= 0 || p_w <= 0 || s_h <= 0 || s_w <= 0)
    throw ArgumentError("patch size and stride must be positive");
  if (p_h > cube.height || p_w > cube.width)
    throw ArgumentError("patch larger than cube");
  const auto rows = patch_anchors(cube.height, p_h, s_h);
  const auto cols = patch_anchors(cube.width, p_w, s_w);
  std::vector<HsiCube> patches;
  patches.reserve(rows.size() * cols.size());
  for (std::int64_t r : rows)
    for (std::int64_t c : cols) {
      HsiCube p(p_h, p_w, cube.bands);
      for (std::int64_t i = 0; i < p_h; ++i)
        for (std::int64_t j = 0; j < p_w; ++j)
          for (std::int64_t k = 0; k < cube.bands; ++k)
            p.at(i, j, k) = cube.at(r + i, c + j, k);
      patches.push_back(std::move(p));
    }
  return patches;
}

// --- spatial augmentation -------------------------------------------------------

enum class AugmentOp { Identity, Rot90, Rot180, Rot270, FlipH, FlipV };

inline AugmentOp augment_op_from_string(const std::string& s) {
  if (s == "identity") return AugmentOp::Identity;
  if (s == "rot90") return AugmentOp::Rot90;
  if (s == "rot180") return AugmentOp::Rot180;
  if (s == "rot270") return AugmentOp::Rot270;
  if (s == "flipH") return AugmentOp::FlipH;
  if (s == "flipV") return AugmentOp::FlipV;
  throw ArgumentError("unknown augment op: " + s);
}

// Spatial transform applied per band; bands untouched. rot90 is
// counter-clockwise: out(i,j) = in(j, w-1-i), out is w x h.
inline HsiCube augment(const HsiCube& patch, AugmentOp op) {
  const std::int64_t h = patch.height, w = patch.width, b = patch.bands;
  auto mapped = [&](std::int64_t oh, std::int64_t ow,
                    auto&& f) {
    HsiCube out(oh, ow, b);
    for (std::int64_t i = 0; i < oh; ++i)
      for (std::int64_t j = 0; j < ow; ++j) {
        const auto [si, sj] = f(i, j);
        for (std::int64_t k = 0; k < b; ++k) out.at(i, j, k) = patch.at(si, sj, k);
      }
    return out;
  };
  switch (op) {
    case AugmentOp::Identity:
      return patch;
    case AugmentOp::Rot90:
      return mapped(w, h, [&](std::int64_t i, std::int64_t j) {
        return std::pair{j, w - 1 - i};
      });
    case AugmentOp::Rot180:
      return mapped(h, w, [&](std::int64_t i, std::int64_t j) {
        return std::pair{h - 1 - i, w - 1 - j};
      });
    case AugmentOp::Rot270:
      return mapped(w, h, [&](std::int64_t i, std::int64_t j) {
        return std::pair{h - 1 - j, i};
      });
    case AugmentOp::FlipH:
      return mapped(h, w, [&](std::int64_t i, std::int64_t j) {
        return std::pair{i, w - 1 - j};
      });
    case AugmentOp::FlipV:
      return mapped(h, w, [&](std::int64_t i, std::int64_t j) {
        return std::pair{h - 1 - i, j};
      });
  }
  throw ArgumentError("unknown augment op");
}

// Affine map of global min/max to [0,1].
inline HsiCube normalize(const HsiCube& cube) {
  cube.validate();
  double lo = cube.data[0], hi = cube.data[0];
  for (double x : cube.data) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!(hi > lo)) throw DegenerateInputError("constant cube cannot be normalized");
  HsiCube out = cube;
  const double scale = 1.0 / (hi - lo);
  for (double& x : out.data) x = (x - lo) * scale;
  return out;
}

// --- manifest ---------------------------------------------------------------------

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    if (!valid_case_tag(e.case_tag)) throw ArgumentError("invalid case tag: " + e.case_tag);
    j["entries"].push_back({{"noisy", e.noisy}, {"clean", e.clean}, {"case", e.case_tag}});
  }
  j["seed"] = m.seed;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest parse error: " + std::string(e.what()));
  }
  DatasetManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  const auto base = path.parent_path();
  for (const auto& e : j.at("entries")) {
    ManifestEntry entry;
    entry.noisy = e.at("noisy").get<std::string>();
    entry.clean = e.at("clean").get<std::string>();
    entry.case_tag = e.at("case").get<std::string>();
    if (!valid_case_tag(entry.case_tag))
      throw FormatError("invalid case tag in manifest: " + entry.case_tag);
    // paths are manifest-relative unless absolute
    for (std::string* p : {&entry.noisy, &entry.clean}) {
      std::filesystem::path fp(*p);
      if (fp.is_relative()) *p = (base / fp).string();
      if (!std::filesystem::exists(*p)) throw IoError("manifest path missing: " + *p);
    }
    m.entries.push_back(std::move(entry));
  }
  return m;
}

}  // namespace hwprox
