// Shared test utilities: a portable deterministic RNG, random mask and
// phantom-tree generators, and independent brute-force oracles. The oracles
// deliberately use only Volume accessors and the canonical dist2_mm metric;
// none of them share a code path with the implementations they check.

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "vesselscale/branches.hpp"
#include "vesselscale/phantom.hpp"
#include "vesselscale/volume.hpp"

namespace testsupport {

using namespace vesselscale;

// mt19937_64 is bit-identical everywhere; the distributions below avoid
// std::uniform_*_distribution, whose output is implementation-defined.
inline double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * u01(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

inline MaskVolume random_mask(std::mt19937_64& rng, Dims3 dims, Spacing3 spacing,
                              double fill_prob) {
  MaskVolume m(dims, spacing, std::uint8_t{0});
  for (auto& v : m.data()) v = u01(rng) < fill_prob ? 1 : 0;
  return m;
}

/// Random connected capsule tree: each new segment grows from the endpoint
/// of an existing one.
inline PhantomSpec random_tree_spec(std::mt19937_64& rng, Dims3 dims, Spacing3 spacing,
                                    int segment_count, double min_radius,
                                    double max_radius) {
  PhantomSpec spec;
  spec.dims = dims;
  spec.spacing = spacing;
  const double ex = dims[0] * spacing[0];
  const double ey = dims[1] * spacing[1];
  const double ez = dims[2] * spacing[2];
  auto clamp_point = [&](std::array<double, 3> p) {
    p[0] = std::clamp(p[0], 0.08 * ex, 0.92 * ex);
    p[1] = std::clamp(p[1], 0.08 * ey, 0.92 * ey);
    p[2] = std::clamp(p[2], 0.08 * ez, 0.92 * ez);
    return p;
  };

  std::vector<std::array<double, 3>> tips;
  std::array<double, 3> root = {0.5 * ex, 0.5 * ey, 0.2 * ez};
  for (int i = 0; i < segment_count; ++i) {
    PhantomSegment seg;
    seg.id = static_cast<std::uint32_t>(i + 1);
    seg.radius_mm = uniform(rng, min_radius, max_radius);
    seg.start_mm = i == 0 ? root : tips[static_cast<std::size_t>(
                                       uniform_int(rng, 0, static_cast<int>(tips.size()) - 1))];
    const double len = uniform(rng, 0.18, 0.34) * std::min({ex, ey, ez});
    std::array<double, 3> dir = {uniform(rng, -1, 1), uniform(rng, -1, 1),
                                 uniform(rng, 0.2, 1)};
    const double n =
        std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    seg.end_mm = clamp_point({seg.start_mm[0] + len * dir[0] / n,
                              seg.start_mm[1] + len * dir[1] / n,
                              seg.start_mm[2] + len * dir[2] / n});
    seg.start_mm = clamp_point(seg.start_mm);
    tips.push_back(seg.end_mm);
    spec.segments.push_back(seg);
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Brute-force oracles
// ---------------------------------------------------------------------------

/// m-th smallest surface distance from `from`, ties by linear index.
inline double brute_local_radius(const VoxelCoord& from,
                                 const std::vector<VoxelCoord>& surface, Dims3 dims,
                                 const Spacing3& spacing, int m) {
  std::vector<std::pair<double, std::int64_t>> all;
  all.reserve(surface.size());
  for (const auto& w : surface) {
    const std::int64_t lin =
        w.x + static_cast<std::int64_t>(dims[0]) *
                  (w.y + static_cast<std::int64_t>(dims[1]) * w.z);
    all.emplace_back(dist2_mm(from, w, spacing), lin);
  }
  std::sort(all.begin(), all.end());
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(m), all.size());
  return std::sqrt(all[k - 1].first);
}

/// Nearest labeled skeleton voxel under (distance, branch id, linear index).
inline std::uint32_t brute_nearest_branch(const VoxelCoord& from,
                                          const LabeledSkeleton& ls,
                                          const Spacing3& spacing) {
  double best_d2 = std::numeric_limits<double>::infinity();
  std::uint32_t best_id = 0;
  std::int64_t best_lin = -1;
  for (std::size_t i = 0; i < ls.voxels.size(); ++i) {
    const VoxelCoord& g = ls.voxels[i];
    const std::int64_t lin =
        g.x + static_cast<std::int64_t>(ls.dims[0]) *
                  (g.y + static_cast<std::int64_t>(ls.dims[1]) * g.z);
    const double d2 = dist2_mm(from, g, spacing);
    const std::uint32_t id = ls.branch_ids[i];
    if (d2 < best_d2 || (d2 == best_d2 && (id < best_id || (id == best_id && lin < best_lin)))) {
      best_d2 = d2;
      best_id = id;
      best_lin = lin;
    }
  }
  return best_id;
}

inline std::vector<VoxelCoord> foreground_voxels(const MaskVolume& m) {
  std::vector<VoxelCoord> out;
  const Dims3& d = m.dims();
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x)
        if (m.at(x, y, z) != 0) out.push_back({x, y, z});
  return out;
}

/// O(|A|*|B|) symmetric Hausdorff distance over foreground voxel centers.
inline double brute_hausdorff(const MaskVolume& a, const MaskVolume& b,
                              const Spacing3& spacing) {
  const auto fa = foreground_voxels(a);
  const auto fb = foreground_voxels(b);
  if (fa.empty() && fb.empty()) return 0.0;
  if (fa.empty() || fb.empty()) return std::numeric_limits<double>::infinity();
  auto directed = [&](const std::vector<VoxelCoord>& from,
                      const std::vector<VoxelCoord>& to) {
    double worst = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, dist2_mm(p, q, spacing));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::sqrt(std::max(directed(fa, fb), directed(fb, fa)));
}

/// Nearest source index along one axis for nearest-neighbor resampling:
/// output centers at (i+0.5)*s_out, source centers at (j+0.5)*s_in, ties to
/// the larger source index.
inline int brute_nearest_source_index(int i, int n_in, int n_out) {
  const double pos = (i + 0.5) * static_cast<double>(n_in) / n_out;
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n_in; ++j) {
    const double dist = std::abs(pos - (j + 0.5));
    if (dist < best_dist || (dist == best_dist && j > best)) {
      best_dist = dist;
      best = j;
    }
  }
  return best;
}

}  // namespace testsupport
