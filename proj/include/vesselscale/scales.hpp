// Quartile-based scale clustering of branch radii and per-volume radius
// statistics.
//
// Quantiles use linear interpolation between order statistics at
// h = (n-1)*p. For S = 3 the thresholds are exactly (Q1, Q3); for other S
// they sit at the evenly spaced quantiles k/S, k = 1..S-1. Scale bins are
// (-inf, t1], (t1, t2], ..., (t_{S-1}, inf): a branch whose radius equals a
// threshold goes to the smaller scale.

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vesselscale/branches.hpp"
#include "vesselscale/volume.hpp"

namespace vesselscale {

struct ScaleThresholds {
  std::vector<double> values;  // ascending, S-1 entries
  int scale_count = 0;
  std::string estimator;  // "quartiles" for S=3, "even_quantiles" otherwise
};

struct ScaleDecomposition {
  std::vector<MaskVolume> masks;  // index 0 = smallest-radius scale
  ScaleThresholds thresholds;
};

/// Quantile at h = (n-1)*p with linear interpolation, over sorted values.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 0) throw std::invalid_argument("quantile of empty set");
  if (n == 1) return sorted[0];
  const double h = static_cast<double>(n - 1) * p;
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline ScaleThresholds compute_thresholds(std::vector<double> radii, int scale_count) {
  if (radii.empty()) throw std::invalid_argument("compute_thresholds: no branch radii");
  if (scale_count < 2) throw std::invalid_argument("compute_thresholds: S must be >= 2");
  std::sort(radii.begin(), radii.end());

  ScaleThresholds out;
  out.scale_count = scale_count;
  if (scale_count == 3) {
    out.estimator = "quartiles";
    out.values = {quantile_sorted(radii, 0.25), quantile_sorted(radii, 0.75)};
  } else {
    out.estimator = "even_quantiles";
    for (int k = 1; k < scale_count; ++k)
      out.values.push_back(quantile_sorted(radii, static_cast<double>(k) / scale_count));
  }
  return out;
}

/// Scale index (1-based) of a radius: 1 + number of thresholds strictly
/// below it.
inline int scale_of_radius(double radius, const ScaleThresholds& t) {
  int s = 1;
  for (double v : t.values)
    if (v < radius) ++s;
  return s;
}

inline ScaleDecomposition assign_scales(const LabelVolume& branch_labels,
                                        const BranchTable& table,
                                        const ScaleThresholds& thresholds) {
  if (thresholds.scale_count < 2)
    throw std::invalid_argument("assign_scales: S must be >= 2");

  std::vector<int> scale_of(table.rows.size() + 1, 0);
  for (const auto& row : table.rows) {
    if (row.id == 0 || row.id > table.rows.size())
      throw std::invalid_argument("assign_scales: branch table ids not contiguous");
    scale_of[row.id] = scale_of_radius(row.radius_mm, thresholds);
  }

  ScaleDecomposition out;
  out.thresholds = thresholds;
  out.masks.reserve(static_cast<std::size_t>(thresholds.scale_count));
  for (int s = 0; s < thresholds.scale_count; ++s)
    out.masks.emplace_back(branch_labels.dims(), branch_labels.spacing(), std::uint8_t{0});

  const auto& labels = branch_labels.data();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::uint32_t id = labels[i];
    if (id == 0) continue;
    if (id >= scale_of.size() || scale_of[id] == 0)
      throw std::invalid_argument("assign_scales: label " + std::to_string(id) +
                                  " missing from branch table");
    out.masks[static_cast<std::size_t>(scale_of[id] - 1)].data()[i] = 1;
  }
  return out;
}

struct RadiusStatistics {
  std::uint64_t branch_count = 0;
  std::optional<double> min, q1, median, q3, max;
};

inline RadiusStatistics radius_statistics(const BranchTable& table) {
  RadiusStatistics out;
  out.branch_count = table.rows.size();
  if (table.rows.empty()) return out;
  std::vector<double> radii;
  radii.reserve(table.rows.size());
  for (const auto& row : table.rows) radii.push_back(row.radius_mm);
  std::sort(radii.begin(), radii.end());
  out.min = radii.front();
  out.q1 = quantile_sorted(radii, 0.25);
  out.median = quantile_sorted(radii, 0.50);
  out.q3 = quantile_sorted(radii, 0.75);
  out.max = radii.back();
  return out;
}

}  // namespace vesselscale
