// Segmentation evaluation metrics: Dice, Jaccard, centerline Dice and the
// exact symmetric Hausdorff distance in physical millimeters.
//
// Empty-mask conventions: Dice/Jaccard/clDice of two empty masks are 1;
// clDice is 0 when exactly one skeleton is empty or both topology scores
// vanish; Hausdorff of two empty masks is 0 and of exactly one empty mask is
// +infinity.

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "vesselscale/kdtree.hpp"
#include "vesselscale/skeleton.hpp"
#include "vesselscale/volume.hpp"

namespace vesselscale {

struct MetricsReport {
  double dsc = 0.0;
  double jacc = 0.0;
  double cldsc = 0.0;
  double hd_mm = 0.0;  // +infinity when exactly one mask is empty

  bool hd_defined() const { return std::isfinite(hd_mm); }
};

namespace detail {

inline void require_same_dims(const MaskVolume& a, const MaskVolume& b, const char* what) {
  if (a.dims() != b.dims())
    throw std::invalid_argument(std::string(what) + ": volume dims mismatch");
}

struct OverlapCounts {
  std::int64_t a = 0, b = 0, both = 0;
};

inline OverlapCounts overlap(const MaskVolume& gt, const MaskVolume& pred) {
  OverlapCounts c;
  const auto& g = gt.data();
  const auto& p = pred.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    c.a += (g[i] != 0);
    c.b += (p[i] != 0);
    c.both += (g[i] != 0 && p[i] != 0);
  }
  return c;
}

}  // namespace detail

inline double dice(const MaskVolume& gt, const MaskVolume& pred) {
  detail::require_same_dims(gt, pred, "dice");
  const auto c = detail::overlap(gt, pred);
  if (c.a + c.b == 0) return 1.0;
  return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.a + c.b);
}

inline double jaccard(const MaskVolume& gt, const MaskVolume& pred) {
  detail::require_same_dims(gt, pred, "jaccard");
  const auto c = detail::overlap(gt, pred);
  const std::int64_t uni = c.a + c.b - c.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(c.both) / static_cast<double>(uni);
}

/// Centerline Dice: harmonic mean of topology precision |S_P & GT|/|S_P|
/// and topology sensitivity |S_G & P|/|S_G|, skeletons from this library's
/// own thinning.
inline double cl_dice(const MaskVolume& gt, const MaskVolume& pred) {
  detail::require_same_dims(gt, pred, "cl_dice");
  const bool gt_empty = count_foreground(gt) == 0;
  const bool pred_empty = count_foreground(pred) == 0;
  if (gt_empty && pred_empty) return 1.0;
  if (gt_empty != pred_empty) return 0.0;

  const Skeleton sg = skeletonize(gt);
  const Skeleton sp = skeletonize(pred);
  if (sg.voxels.empty() || sp.voxels.empty())
    return (sg.voxels.empty() && sp.voxels.empty()) ? 1.0 : 0.0;

  std::int64_t sp_in_gt = 0;
  for (const auto& v : sp.voxels) sp_in_gt += (gt.at(v) != 0);
  std::int64_t sg_in_pred = 0;
  for (const auto& v : sg.voxels) sg_in_pred += (pred.at(v) != 0);

  const double tprec = static_cast<double>(sp_in_gt) / static_cast<double>(sp.voxels.size());
  const double tsens = static_cast<double>(sg_in_pred) / static_cast<double>(sg.voxels.size());
  if (tprec + tsens == 0.0) return 0.0;
  return 2.0 * tprec * tsens / (tprec + tsens);
}

namespace detail {

inline std::vector<VoxelCoord> foreground_coords(const MaskVolume& m) {
  std::vector<VoxelCoord> out;
  const Dims3& d = m.dims();
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x)
        if (m.at(x, y, z) != 0) out.push_back({x, y, z});
  return out;
}

// max over `from` of the exact nearest squared distance into `tree`
inline double directed_worst_d2(const std::vector<VoxelCoord>& from,
                                const VoxelKdTree& tree) {
  double worst = 0.0;
  for (const auto& v : from) worst = std::max(worst, tree.nearest_one(v).d2);
  return worst;
}

}  // namespace detail

/// Exact symmetric Hausdorff distance between foreground voxel centers, in
/// millimeters: exact nearest-foreground distances of each mask evaluated at
/// the other mask's foreground voxels.
inline double hausdorff(const MaskVolume& gt, const MaskVolume& pred,
                        const Spacing3& spacing) {
  detail::require_same_dims(gt, pred, "hausdorff");
  if (gt.spacing() != pred.spacing() || gt.spacing() != spacing)
    throw std::invalid_argument("hausdorff: spacing mismatch");

  const auto gt_fg = detail::foreground_coords(gt);
  const auto pred_fg = detail::foreground_coords(pred);
  if (gt_fg.empty() && pred_fg.empty()) return 0.0;
  if (gt_fg.empty() != pred_fg.empty())
    return std::numeric_limits<double>::infinity();

  const std::vector<std::uint64_t> no_keys_gt(gt_fg.size(), 0);
  const std::vector<std::uint64_t> no_keys_pred(pred_fg.size(), 0);
  const VoxelKdTree gt_tree(gt_fg, no_keys_gt, spacing);
  const VoxelKdTree pred_tree(pred_fg, no_keys_pred, spacing);
  const double worst2 = std::max(detail::directed_worst_d2(gt_fg, pred_tree),
                                 detail::directed_worst_d2(pred_fg, gt_tree));
  return std::sqrt(worst2);
}

inline MetricsReport evaluate_masks(const MaskVolume& gt, const MaskVolume& pred) {
  MetricsReport r;
  r.dsc = dice(gt, pred);
  r.jacc = jaccard(gt, pred);
  r.cldsc = cl_dice(gt, pred);
  r.hd_mm = hausdorff(gt, pred, gt.spacing());
  return r;
}

}  // namespace vesselscale
