/* Copyright 2026 The lungsev Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Volumetric data model (z-y-x everywhere), raw+JSON file pairs, and the
// geometric / intensity preprocessing used ahead of segmentation.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "lungsev/error.hpp"
#include "lungsev/random.hpp"

namespace lungsev {

struct Dims {
  std::int64_t z = 1;
  std::int64_t y = 1;
  std::int64_t x = 1;

  [[nodiscard]] std::int64_t count() const { return z * y * x; }
  [[nodiscard]] std::string str() const {
    std::ostringstream os;
    os << "(" << z << "," << y << "," << x << ")";
    return os.str();
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

struct Spacing {
  double z = 1.0;
  double y = 1.0;
  double x = 1.0;

  [[nodiscard]] double voxel_volume() const { return z * y * x; }
  [[nodiscard]] std::string str() const {
    std::ostringstream os;
    os.precision(17);
    os << "(" << z << "," << y << "," << x << ")";
    return os.str();
  }
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

using Index3 = std::array<std::int64_t, 3>;

enum class Axis { kZ = 0, kY = 1, kX = 2 };

inline void validate_geometry(const Dims& d, const Spacing& s) {
  if (d.z < 1 || d.y < 1 || d.x < 1) {
    throw GeometryError("dims must be >= 1 per axis, got " + d.str());
  }
  for (double v : {s.z, s.y, s.x}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw GeometryError("spacing must be positive and finite, got " + s.str());
    }
  }
}

/// Dense 3D grid, linear index (z*Y + y)*X + x.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(Dims dims, Spacing spacing, T fill = T{})
      : dims_(dims), spacing_(spacing) {
    validate_geometry(dims_, spacing_);
    data_.assign(static_cast<std::size_t>(dims_.count()), fill);
  }
  Grid(Dims dims, Spacing spacing, std::vector<T> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    validate_geometry(dims_, spacing_);
    if (static_cast<std::int64_t>(data_.size()) != dims_.count()) {
      throw FormatError("data length " + std::to_string(data_.size()) +
                        " does not match dims " + dims_.str());
    }
  }

  [[nodiscard]] const Dims& dims() const { return dims_; }
  [[nodiscard]] const Spacing& spacing() const { return spacing_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] std::span<const T> data() const { return data_; }
  [[nodiscard]] std::span<T> data() { return data_; }
  [[nodiscard]] const std::vector<T>& values() const { return data_; }

  [[nodiscard]] std::size_t index(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return static_cast<std::size_t>((z * dims_.y + y) * dims_.x + x);
  }
  T& operator()(std::int64_t z, std::int64_t y, std::int64_t x) { return data_[index(z, y, x)]; }
  const T& operator()(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return data_[index(z, y, x)];
  }
  [[nodiscard]] bool contains(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return z >= 0 && y >= 0 && x >= 0 && z < dims_.z && y < dims_.y && x < dims_.x;
  }

  template <class U>
  [[nodiscard]] bool same_geometry(const Grid<U>& other) const {
    return dims_ == other.dims() && spacing_ == other.spacing();
  }

 private:
  Dims dims_{};
  Spacing spacing_{};
  std::vector<T> data_ = std::vector<T>(1);
};

/// On-disk sample type.
enum class DType { kInt16, kFloat32, kUInt8 };

inline std::string to_string(DType t) {
  switch (t) {
    case DType::kInt16: return "int16";
    case DType::kFloat32: return "float32";
    case DType::kUInt8: return "uint8";
  }
  return "?";
}

inline DType parse_dtype(const std::string& s) {
  if (s == "int16") return DType::kInt16;
  if (s == "float32") return DType::kFloat32;
  if (s == "uint8") return DType::kUInt8;
  throw FormatError("unsupported dtype '" + s + "'");
}

inline std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::kInt16: return 2;
    case DType::kFloat32: return 4;
    case DType::kUInt8: return 1;
  }
  return 0;
}

/// Intensity volume. Samples are held as float, which represents every int16
/// and uint8 value exactly, so the native dtype survives a round trip.
class Volume : public Grid<float> {
 public:
  Volume() = default;
  Volume(Dims dims, Spacing spacing, float fill = 0.0F, DType dtype = DType::kFloat32)
      : Grid<float>(dims, spacing, fill), dtype_(dtype) {}
  Volume(Dims dims, Spacing spacing, std::vector<float> data, DType dtype = DType::kFloat32)
      : Grid<float>(dims, spacing, std::move(data)), dtype_(dtype) {}
  Volume(Grid<float> g, DType dtype, bool normalized)
      : Grid<float>(std::move(g)), dtype_(dtype), normalized_(normalized) {}

  [[nodiscard]] DType dtype() const { return dtype_; }
  /// True once the volume has been windowed to [0,1]; HU thresholds no longer apply.
  [[nodiscard]] bool normalized() const { return normalized_; }

 private:
  DType dtype_ = DType::kFloat32;
  bool normalized_ = false;
};

/// 0 = background; lobes 1..5 (RU, RM, RL, LU, LL); or binary 1 = abnormal.
using LabelMask = Grid<std::uint8_t>;

inline constexpr std::uint8_t kNumLobes = 5;

struct WindowSpec {
  double level = -600.0;
  double width = 1500.0;

  [[nodiscard]] double lo() const { return level - width / 2.0; }
  [[nodiscard]] double hi() const { return level + width / 2.0; }
};

// ---------------------------------------------------------------------------
// File I/O

namespace detail {

struct VolumePaths {
  std::filesystem::path header;
  std::filesystem::path payload;
};

inline VolumePaths volume_paths(const std::filesystem::path& p) {
  std::filesystem::path base = p;
  if (base.extension() == ".json" || base.extension() == ".raw") base.replace_extension();
  std::filesystem::path header = base;
  header += ".json";
  std::filesystem::path payload = base;
  payload += ".raw";
  return {header, payload};
}

struct Header {
  Dims dims;
  Spacing spacing;
  DType dtype = DType::kFloat32;
};

inline Header read_header(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing header " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("ill-formed header " + path.string() + ": " + e.what());
  }
  auto fail = [&](const std::string& what) {
    throw FormatError("ill-formed header " + path.string() + ": " + what);
  };
  if (!j.is_object()) fail("not an object");
  for (const char* key : {"dims", "spacing_mm", "dtype", "byte_order"}) {
    if (!j.contains(key)) fail(std::string("missing field '") + key + "'");
  }
  const auto& dj = j["dims"];
  const auto& sj = j["spacing_mm"];
  if (!dj.is_array() || dj.size() != 3) fail("dims must be [Z,Y,X]");
  if (!sj.is_array() || sj.size() != 3) fail("spacing_mm must be [sz,sy,sx]");
  for (const auto& v : dj) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 1) fail("dims must be positive integers");
  }
  for (const auto& v : sj) {
    if (!v.is_number()) fail("spacing_mm must be numbers");
  }
  if (!j["dtype"].is_string()) fail("dtype must be a string");
  if (j["byte_order"] != "little") fail("byte_order must be \"little\"");

  Header h;
  h.dims = {dj[0].get<std::int64_t>(), dj[1].get<std::int64_t>(), dj[2].get<std::int64_t>()};
  h.spacing = {sj[0].get<double>(), sj[1].get<double>(), sj[2].get<double>()};
  h.dtype = parse_dtype(j["dtype"].get<std::string>());
  validate_geometry(h.dims, h.spacing);
  return h;
}

inline void write_header(const std::filesystem::path& path, const Dims& d, const Spacing& s,
                         DType dtype) {
  nlohmann::ordered_json j;
  j["dims"] = {d.z, d.y, d.x};
  j["spacing_mm"] = {s.z, s.y, s.x};
  j["dtype"] = to_string(dtype);
  j["byte_order"] = "little";
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump() << "\n";
}

template <class U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(U)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<U>(bytes);
  }
  return v;
}

template <class U>
std::vector<U> read_payload(const std::filesystem::path& path, std::int64_t expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing payload " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::int64_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  if (bytes % static_cast<std::int64_t>(sizeof(U)) != 0 ||
      bytes / static_cast<std::int64_t>(sizeof(U)) != expected) {
    throw FormatError("length mismatch in " + path.string() + ": header declares " +
                      std::to_string(expected) + " samples, payload holds " +
                      std::to_string(bytes / static_cast<std::int64_t>(sizeof(U))));
  }
  std::vector<U> raw(static_cast<std::size_t>(expected));
  in.read(reinterpret_cast<char*>(raw.data()), bytes);
  if (!in) throw FormatError("short read from " + path.string());
  for (auto& v : raw) v = to_little(v);
  return raw;
}

template <class U>
void write_payload(const std::filesystem::path& path, const std::vector<U>& raw) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(U)));
  } else {
    for (U v : raw) {
      v = to_little(v);
      out.write(reinterpret_cast<const char*>(&v), sizeof(U));
    }
  }
  if (!out) throw FormatError("short write to " + path.string());
}

}  // namespace detail

/// Reads `<name>.json` + `<name>.raw`. `path` may name either file or the stem.
inline Volume read_volume(const std::filesystem::path& path) {
  const auto paths = detail::volume_paths(path);
  const auto h = detail::read_header(paths.header);
  std::vector<float> data;
  switch (h.dtype) {
    case DType::kInt16: {
      auto raw = detail::read_payload<std::int16_t>(paths.payload, h.dims.count());
      data.assign(raw.begin(), raw.end());
      break;
    }
    case DType::kUInt8: {
      auto raw = detail::read_payload<std::uint8_t>(paths.payload, h.dims.count());
      data.assign(raw.begin(), raw.end());
      break;
    }
    case DType::kFloat32:
      data = detail::read_payload<float>(paths.payload, h.dims.count());
      break;
  }
  return Volume(h.dims, h.spacing, std::move(data), h.dtype);
}

/// Writes in `dtype` (defaults to the volume's own). Values that the target
/// integer type cannot hold exactly are rejected rather than rounded.
inline void write_volume(const Volume& v, const std::filesystem::path& path,
                         std::optional<DType> dtype = std::nullopt) {
  const auto paths = detail::volume_paths(path);
  const DType t = dtype.value_or(v.dtype());
  auto check_integral = [&](double lo, double hi) {
    for (float f : v.data()) {
      if (!(f >= lo && f <= hi) || std::floor(f) != f) {
        throw FormatError("value " + std::to_string(f) + " not representable as " + to_string(t));
      }
    }
  };
  switch (t) {
    case DType::kInt16: {
      check_integral(std::numeric_limits<std::int16_t>::min(), std::numeric_limits<std::int16_t>::max());
      std::vector<std::int16_t> raw(v.data().begin(), v.data().end());
      detail::write_payload(paths.payload, raw);
      break;
    }
    case DType::kUInt8: {
      check_integral(0, 255);
      std::vector<std::uint8_t> raw(v.data().begin(), v.data().end());
      detail::write_payload(paths.payload, raw);
      break;
    }
    case DType::kFloat32:
      detail::write_payload(paths.payload, v.values());
      break;
  }
  detail::write_header(paths.header, v.dims(), v.spacing(), t);
}

inline LabelMask read_mask(const std::filesystem::path& path) {
  const auto paths = detail::volume_paths(path);
  const auto h = detail::read_header(paths.header);
  if (h.dtype != DType::kUInt8) {
    throw FormatError("mask " + paths.header.string() + " must be uint8, got " + to_string(h.dtype));
  }
  return LabelMask(h.dims, h.spacing, detail::read_payload<std::uint8_t>(paths.payload, h.dims.count()));
}

inline void write_mask(const LabelMask& m, const std::filesystem::path& path) {
  const auto paths = detail::volume_paths(path);
  detail::write_payload(paths.payload, m.values());
  detail::write_header(paths.header, m.dims(), m.spacing(), DType::kUInt8);
}

// ---------------------------------------------------------------------------
// Resampling

enum class Interp { kNearest, kTrilinear };

namespace detail {

inline std::int64_t resampled_extent(std::int64_t n, double from, double to) {
  return std::max<std::int64_t>(1, std::llround(static_cast<double>(n) * from / to));
}

/// Continuous source index of output voxel j: voxel j covers [j*to, (j+1)*to)
/// in physical space starting at the source's outer edge. Clamped to the
/// source index range.
inline std::vector<double> source_coords(std::int64_t n_out, std::int64_t n_in, double from, double to) {
  std::vector<double> c(static_cast<std::size_t>(n_out));
  const double ratio = to / from;
  for (std::int64_t j = 0; j < n_out; ++j) {
    const double s = (static_cast<double>(j) + 0.5) * ratio - 0.5;
    c[static_cast<std::size_t>(j)] = std::clamp(s, 0.0, static_cast<double>(n_in - 1));
  }
  return c;
}

struct LinearTap {
  std::int64_t i0;
  std::int64_t i1;
  double w1;
};

inline std::vector<LinearTap> linear_taps(const std::vector<double>& coords, std::int64_t n_in) {
  std::vector<LinearTap> taps;
  taps.reserve(coords.size());
  for (double c : coords) {
    const auto i0 = static_cast<std::int64_t>(std::floor(c));
    const auto i1 = std::min(i0 + 1, n_in - 1);
    taps.push_back({i0, i1, c - static_cast<double>(i0)});
  }
  return taps;
}

inline std::vector<std::int64_t> nearest_taps(const std::vector<double>& coords, std::int64_t n_in) {
  std::vector<std::int64_t> taps;
  taps.reserve(coords.size());
  for (double c : coords) taps.push_back(std::clamp<std::int64_t>(std::llround(c), 0, n_in - 1));
  return taps;
}

template <class T>
Grid<T> resample_nearest(const Grid<T>& g, const Spacing& target, const Dims& out) {
  const auto& d = g.dims();
  const auto& s = g.spacing();
  const auto tz = nearest_taps(source_coords(out.z, d.z, s.z, target.z), d.z);
  const auto ty = nearest_taps(source_coords(out.y, d.y, s.y, target.y), d.y);
  const auto tx = nearest_taps(source_coords(out.x, d.x, s.x, target.x), d.x);
  Grid<T> r(out, target);
  for (std::int64_t z = 0; z < out.z; ++z)
    for (std::int64_t y = 0; y < out.y; ++y)
      for (std::int64_t x = 0; x < out.x; ++x) r(z, y, x) = g(tz[z], ty[y], tx[x]);
  return r;
}

inline void check_target_spacing(const Spacing& target) {
  for (double v : {target.z, target.y, target.x}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw GeometryError("target spacing must be positive, got " + target.str());
    }
  }
}

inline Dims resampled_dims(const Dims& d, const Spacing& s, const Spacing& target) {
  return {resampled_extent(d.z, s.z, target.z), resampled_extent(d.y, s.y, target.y),
          resampled_extent(d.x, s.x, target.x)};
}

}  // namespace detail

/// Resamples onto `target` spacing. Output extent per axis is
/// round(n * spacing_in / spacing_out), at least 1; samples falling outside
/// the source clamp to the edge voxel.
inline Volume resample(const Volume& v, const Spacing& target, Interp mode = Interp::kTrilinear) {
  detail::check_target_spacing(target);
  if (target == v.spacing()) return v;
  const Dims out = detail::resampled_dims(v.dims(), v.spacing(), target);
  if (mode == Interp::kNearest) {
    return Volume(detail::resample_nearest<float>(v, target, out), v.dtype(), v.normalized());
  }
  const auto& d = v.dims();
  const auto& s = v.spacing();
  const auto tz = detail::linear_taps(detail::source_coords(out.z, d.z, s.z, target.z), d.z);
  const auto ty = detail::linear_taps(detail::source_coords(out.y, d.y, s.y, target.y), d.y);
  const auto tx = detail::linear_taps(detail::source_coords(out.x, d.x, s.x, target.x), d.x);
  Grid<float> r(out, target);
  for (std::int64_t z = 0; z < out.z; ++z) {
    const auto& az = tz[z];
    for (std::int64_t y = 0; y < out.y; ++y) {
      const auto& ay = ty[y];
      for (std::int64_t x = 0; x < out.x; ++x) {
        const auto& ax = tx[x];
        auto plane = [&](std::int64_t zi) {
          const double c0 = (1.0 - ax.w1) * v(zi, ay.i0, ax.i0) + ax.w1 * v(zi, ay.i0, ax.i1);
          const double c1 = (1.0 - ax.w1) * v(zi, ay.i1, ax.i0) + ax.w1 * v(zi, ay.i1, ax.i1);
          return (1.0 - ay.w1) * c0 + ay.w1 * c1;
        };
        r(z, y, x) = static_cast<float>((1.0 - az.w1) * plane(az.i0) + az.w1 * plane(az.i1));
      }
    }
  }
  // Interpolated int16 data is no longer integral.
  return Volume(std::move(r), DType::kFloat32, v.normalized());
}

/// Label masks are always resampled nearest-neighbour so labels never blend.
inline LabelMask resample(const LabelMask& m, const Spacing& target) {
  detail::check_target_spacing(target);
  if (target == m.spacing()) return m;
  return detail::resample_nearest<std::uint8_t>(m, target,
                                                detail::resampled_dims(m.dims(), m.spacing(), target));
}

// ---------------------------------------------------------------------------
// Intensity windowing

inline Volume clip_normalize(const Volume& v, const WindowSpec& w = {}) {
  if (!(w.width > 0.0) || !std::isfinite(w.width) || !std::isfinite(w.level)) {
    throw InputError("window width must be positive and finite");
  }
  const double lo = w.lo();
  const double hi = w.hi();
  std::vector<float> out(v.size());
  const auto in = v.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = static_cast<float>((std::clamp(static_cast<double>(in[i]), lo, hi) - lo) / w.width);
  }
  return Volume(Grid<float>(v.dims(), v.spacing(), std::move(out)), DType::kFloat32, true);
}

// ---------------------------------------------------------------------------
// Cropping

/// Mean index of nonzero voxels, rounded half away from zero.
inline Index3 lung_center(const LabelMask& lobes) {
  std::int64_t n = 0;
  std::int64_t sz = 0, sy = 0, sx = 0;
  const auto& d = lobes.dims();
  for (std::int64_t z = 0; z < d.z; ++z)
    for (std::int64_t y = 0; y < d.y; ++y)
      for (std::int64_t x = 0; x < d.x; ++x) {
        if (lobes(z, y, x) != 0) {
          ++n;
          sz += z;
          sy += y;
          sx += x;
        }
      }
  if (n == 0) throw InputError("lung mask is empty");
  const auto mean = [n](std::int64_t s) {
    return static_cast<std::int64_t>(std::llround(static_cast<double>(s) / static_cast<double>(n)));
  };
  return {mean(sz), mean(sy), mean(sx)};
}

/// Fixed-size box whose voxel (Z/2, Y/2, X/2) is source voxel `center`.
/// Voxels outside the source take `pad`.
template <class T>
Grid<T> crop_box(const Grid<T>& g, const Index3& center, const Dims& box, T pad) {
  if (box.z < 1 || box.y < 1 || box.x < 1) throw GeometryError("crop box must be >= 1, got " + box.str());
  Grid<T> out(box, g.spacing(), pad);
  const std::int64_t oz = center[0] - box.z / 2;
  const std::int64_t oy = center[1] - box.y / 2;
  const std::int64_t ox = center[2] - box.x / 2;
  const auto& d = g.dims();
  for (std::int64_t z = 0; z < box.z; ++z) {
    const std::int64_t sz = z + oz;
    if (sz < 0 || sz >= d.z) continue;
    for (std::int64_t y = 0; y < box.y; ++y) {
      const std::int64_t sy = y + oy;
      if (sy < 0 || sy >= d.y) continue;
      const std::int64_t x0 = std::max<std::int64_t>(0, -ox);
      const std::int64_t x1 = std::min<std::int64_t>(box.x, d.x - ox);
      if (x1 <= x0) continue;
      std::copy_n(&g(sz, sy, x0 + ox), x1 - x0, &out(z, y, x0));
    }
  }
  return out;
}

inline constexpr float kAirHu = -1024.0F;

inline Volume crop_box(const Volume& v, const Index3& center, const Dims& box, float pad = kAirHu) {
  return Volume(crop_box<float>(static_cast<const Grid<float>&>(v), center, box, pad), v.dtype(),
                v.normalized());
}

// ---------------------------------------------------------------------------
// Augmentation

template <class T>
Grid<T> flip(const Grid<T>& g, Axis axis) {
  Grid<T> out = g;
  const auto& d = g.dims();
  for (std::int64_t z = 0; z < d.z; ++z)
    for (std::int64_t y = 0; y < d.y; ++y)
      for (std::int64_t x = 0; x < d.x; ++x) {
        const std::int64_t fz = axis == Axis::kZ ? d.z - 1 - z : z;
        const std::int64_t fy = axis == Axis::kY ? d.y - 1 - y : y;
        const std::int64_t fx = axis == Axis::kX ? d.x - 1 - x : x;
        out(z, y, x) = g(fz, fy, fx);
      }
  return out;
}

inline Volume flip(const Volume& v, Axis axis) {
  return Volume(flip<float>(static_cast<const Grid<float>&>(v), axis), v.dtype(), v.normalized());
}

struct AugmentParams {
  double offset_hu = 0.0;
  std::optional<Axis> flip_axis;
  friend bool operator==(const AugmentParams&, const AugmentParams&) = default;
};

inline constexpr double kMaxIntensityOffsetHu = 20.0;

/// One volume-wide offset in [-20, 20] HU; then no flip with probability 1/2,
/// otherwise a flip along one axis picked uniformly.
inline AugmentParams draw_augment(std::uint64_t seed) {
  auto e = rng::make_engine(seed);
  AugmentParams p;
  p.offset_hu = rng::uniform(e, -kMaxIntensityOffsetHu, kMaxIntensityOffsetHu);
  if (rng::uniform01(e) >= 0.5) p.flip_axis = static_cast<Axis>(rng::uniform_index(e, 3));
  return p;
}

/// Applies the flip only; used to keep masks aligned with an augmented volume.
template <class T>
Grid<T> apply_flip(const Grid<T>& g, const AugmentParams& p) {
  return p.flip_axis ? flip(g, *p.flip_axis) : g;
}

inline Volume apply_augment(const Volume& v, const AugmentParams& p) {
  if (v.normalized()) throw InputError("augment expects a HU volume, got a normalized one");
  std::vector<float> out(v.data().begin(), v.data().end());
  for (auto& f : out) f = static_cast<float>(f + p.offset_hu);
  Volume shifted(Grid<float>(v.dims(), v.spacing(), std::move(out)), DType::kFloat32, false);
  return p.flip_axis ? flip(shifted, *p.flip_axis) : shifted;
}

inline Volume augment(const Volume& v, std::uint64_t seed) { return apply_augment(v, draw_augment(seed)); }

}  // namespace lungsev
