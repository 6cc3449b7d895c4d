// Dense 3D voxel grid with physical spacing, plus the grid-level primitives
// shared by every other component: linear indexing, neighborhood offsets,
// nearest-neighbor resampling and connected-component labeling.
//
// Conventions (fixed, relied upon by file I/O and all tie-breaking rules):
//   * linear index = x + nx*(y + ny*z)  (x fastest)
//   * everything outside the grid is background
//   * physical distances use voxel index deltas scaled by spacing, with the
//     squared distance accumulated as sx^2*dx^2 + sy^2*dy^2 + sz^2*dz^2 in
//     x,y,z order -- every distance computation in the library goes through
//     dist2_mm() so that exactness contracts hold bit-for-bit.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace vesselscale {

using Dims3 = std::array<int, 3>;
using Spacing3 = std::array<double, 3>;

struct VoxelCoord {
  int x = 0;
  int y = 0;
  int z = 0;
  bool operator==(const VoxelCoord&) const = default;
};

enum class Connectivity { six = 6, twenty_six = 26 };

namespace detail {

constexpr std::array<std::array<int, 3>, 6> six_offsets() {
  return {{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
}

constexpr std::array<std::array<int, 3>, 26> twenty_six_offsets() {
  std::array<std::array<int, 3>, 26> out{};
  int n = 0;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        out[n++] = {dx, dy, dz};
      }
  return out;
}

}  // namespace detail

inline constexpr std::array<std::array<int, 3>, 6> kSixNeighbors = detail::six_offsets();
inline constexpr std::array<std::array<int, 3>, 26> kTwentySixNeighbors =
    detail::twenty_six_offsets();

/// Squared physical distance between two voxel coordinates (mm^2).
/// Canonical accumulation order; do not reorder.
inline double dist2_mm(const VoxelCoord& a, const VoxelCoord& b, const Spacing3& s) {
  const double dx = static_cast<double>(a.x - b.x);
  const double dy = static_cast<double>(a.y - b.y);
  const double dz = static_cast<double>(a.z - b.z);
  return (s[0] * s[0]) * (dx * dx) + (s[1] * s[1]) * (dy * dy) + (s[2] * s[2]) * (dz * dz);
}

template <typename T>
class Volume {
 public:
  Volume() = default;

  Volume(Dims3 dims, Spacing3 spacing, T fill = T{})
      : dims_(dims), spacing_(spacing), data_(checked_size(dims, spacing), fill) {}

  Volume(Dims3 dims, Spacing3 spacing, std::vector<T> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != checked_size(dims, spacing))
      throw std::invalid_argument("volume data length does not match dims");
  }

  const Dims3& dims() const { return dims_; }
  const Spacing3& spacing() const { return spacing_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  std::int64_t linear_index(int x, int y, int z) const {
    return x + static_cast<std::int64_t>(dims_[0]) *
                   (y + static_cast<std::int64_t>(dims_[1]) * z);
  }
  std::int64_t linear_index(const VoxelCoord& v) const { return linear_index(v.x, v.y, v.z); }

  VoxelCoord coord_of(std::int64_t idx) const {
    const int nx = dims_[0], ny = dims_[1];
    VoxelCoord v;
    v.x = static_cast<int>(idx % nx);
    idx /= nx;
    v.y = static_cast<int>(idx % ny);
    v.z = static_cast<int>(idx / ny);
    return v;
  }

  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < dims_[0] && y >= 0 && y < dims_[1] && z >= 0 && z < dims_[2];
  }
  bool in_bounds(const VoxelCoord& v) const { return in_bounds(v.x, v.y, v.z); }

  T at(int x, int y, int z) const { return data_[linear_index(x, y, z)]; }
  T at(const VoxelCoord& v) const { return data_[linear_index(v)]; }
  T& at(int x, int y, int z) { return data_[linear_index(x, y, z)]; }
  T& at(const VoxelCoord& v) { return data_[linear_index(v)]; }

  /// Value at (x,y,z), or `outside` when the coordinate is off the grid.
  T at_or(int x, int y, int z, T outside) const {
    return in_bounds(x, y, z) ? data_[linear_index(x, y, z)] : outside;
  }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  bool operator==(const Volume&) const = default;

 private:
  static std::int64_t checked_size(const Dims3& dims, const Spacing3& spacing) {
    for (int d : dims)
      if (d <= 0) throw std::invalid_argument("volume dims must be positive");
    for (double s : spacing)
      if (!(s > 0.0)) throw std::invalid_argument("volume spacing must be positive");
    return static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
  }

  Dims3 dims_{0, 0, 0};
  Spacing3 spacing_{1.0, 1.0, 1.0};
  std::vector<T> data_;
};

using MaskVolume = Volume<std::uint8_t>;
using LabelVolume = Volume<std::uint32_t>;
using ScalarVolume = Volume<float>;

inline bool is_binary(const MaskVolume& v) {
  return std::all_of(v.data().begin(), v.data().end(), [](std::uint8_t b) { return b <= 1; });
}

inline void require_binary(const MaskVolume& v, const char* what) {
  if (!is_binary(v)) throw std::invalid_argument(std::string(what) + ": mask is not binary");
}

inline std::int64_t count_foreground(const MaskVolume& v) {
  std::int64_t n = 0;
  for (std::uint8_t b : v.data()) n += (b != 0);
  return n;
}

/// Nearest-neighbor resampling onto `target` dims. Output spacing is
/// input spacing * (input dims / target dims) per axis, so the physical
/// extent of the grid is preserved. Source index per output index is
/// floor(((2i+1)*n_in) / (2*n_out)), i.e. the source voxel whose center is
/// nearest to the output voxel center, ties resolved toward the larger index.
template <typename T>
Volume<T> resample_nearest(const Volume<T>& src, Dims3 target) {
  for (int d : target)
    if (d <= 0) throw std::invalid_argument("resample target dims must be positive");
  const Dims3& sd = src.dims();
  Spacing3 out_spacing;
  for (int a = 0; a < 3; ++a)
    out_spacing[a] = src.spacing()[a] * (static_cast<double>(sd[a]) / target[a]);

  std::array<std::vector<int>, 3> map;
  for (int a = 0; a < 3; ++a) {
    map[a].resize(target[a]);
    for (int i = 0; i < target[a]; ++i) {
      const std::int64_t num = (2 * static_cast<std::int64_t>(i) + 1) * sd[a];
      int j = static_cast<int>(num / (2 * static_cast<std::int64_t>(target[a])));
      map[a][i] = std::min(j, sd[a] - 1);
    }
  }

  Volume<T> out(target, out_spacing);
  std::int64_t o = 0;
  for (int z = 0; z < target[2]; ++z)
    for (int y = 0; y < target[1]; ++y)
      for (int x = 0; x < target[0]; ++x)
        out.data()[o++] = src.at(map[0][x], map[1][y], map[2][z]);
  return out;
}

struct ComponentLabeling {
  LabelVolume labels;
  std::uint32_t count = 0;
};

/// Label connected foreground components. Component ids are assigned in
/// ascending order of each component's smallest linear index.
inline ComponentLabeling connected_components(const MaskVolume& mask, Connectivity conn) {
  require_binary(mask, "connected_components");
  ComponentLabeling result;
  result.labels = LabelVolume(mask.dims(), mask.spacing(), 0u);
  auto& labels = result.labels.data();
  const auto& data = mask.data();
  const std::int64_t n = mask.size();

  std::vector<std::int64_t> stack;
  std::uint32_t next = 0;
  for (std::int64_t seed = 0; seed < n; ++seed) {
    if (data[seed] == 0 || labels[seed] != 0) continue;
    ++next;
    labels[seed] = next;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const std::int64_t cur = stack.back();
      stack.pop_back();
      const VoxelCoord v = mask.coord_of(cur);
      auto visit = [&](int dx, int dy, int dz) {
        const int x = v.x + dx, y = v.y + dy, z = v.z + dz;
        if (!mask.in_bounds(x, y, z)) return;
        const std::int64_t idx = mask.linear_index(x, y, z);
        if (data[idx] != 0 && labels[idx] == 0) {
          labels[idx] = next;
          stack.push_back(idx);
        }
      };
      if (conn == Connectivity::six) {
        for (const auto& o : kSixNeighbors) visit(o[0], o[1], o[2]);
      } else {
        for (const auto& o : kTwentySixNeighbors) visit(o[0], o[1], o[2]);
      }
    }
  }
  result.count = next;
  return result;
}

}  // namespace vesselscale
