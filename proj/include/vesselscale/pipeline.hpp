// End-to-end decomposition of a binary vessel mask: surface extraction,
// thinning, branch labeling, radius estimation, EDT reconstruction and
// quartile scale clustering. This is the pipeline both the CLI and the
// acceptance suite drive.

#pragma once

#include <stdexcept>

#include "vesselscale/branches.hpp"
#include "vesselscale/scales.hpp"
#include "vesselscale/skeleton.hpp"
#include "vesselscale/volume.hpp"

namespace vesselscale {

struct DecomposeParams {
  int neighbor_count = 8;  // m of the local-radius estimator
  int scale_count = 3;     // S
};

struct DecomposeResult {
  SurfaceSet surface;
  Skeleton skeleton;
  LabeledSkeleton labeled_skeleton;
  LocalRadiusMap radii;
  BranchTable table;
  LabelVolume branch_labels;
  ScaleThresholds thresholds;
  ScaleDecomposition scales;
  RadiusStatistics statistics;
};

inline DecomposeResult decompose_mask(const MaskVolume& mask, const DecomposeParams& params) {
  require_binary(mask, "decompose_mask");
  if (count_foreground(mask) == 0)
    throw std::invalid_argument("decompose_mask: mask is empty (no vasculature)");

  DecomposeResult r;
  r.surface = extract_surface(mask);
  r.skeleton = skeletonize(mask);
  r.labeled_skeleton = label_branches(r.skeleton);
  r.radii = local_radius(r.skeleton, r.surface, mask.spacing(), params.neighbor_count);
  r.table = branch_radius(r.labeled_skeleton, r.radii);
  r.branch_labels = reconstruct_branches(mask, r.labeled_skeleton, mask.spacing());
  count_reconstructed(r.table, r.branch_labels);

  std::vector<double> radii;
  radii.reserve(r.table.rows.size());
  for (const auto& row : r.table.rows) radii.push_back(row.radius_mm);
  r.thresholds = compute_thresholds(radii, params.scale_count);
  r.scales = assign_scales(r.branch_labels, r.table, r.thresholds);
  r.statistics = radius_statistics(r.table);
  return r;
}

}  // namespace vesselscale
