// Synthetic tubular trees with exact ground truth. Each segment is a capsule
// (cylinder with hemispherical caps): a voxel is foreground when its center
// lies within the segment radius of the segment axis. Ground-truth labels
// take the covering segment with the smallest axis distance, ties to the
// lower id -- the same tie direction reconstruct_branches uses. Voxel
// centers sit at (i + 0.5) * spacing, so the physical extent of the grid is
// [0, dims * spacing].

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vesselscale/branches.hpp"
#include "vesselscale/volume.hpp"

namespace vesselscale {

struct PhantomSegment {
  std::array<double, 3> start_mm{0, 0, 0};
  std::array<double, 3> end_mm{0, 0, 0};
  double radius_mm = 0.0;
  std::uint32_t id = 0;
};

struct PhantomSpec {
  std::vector<PhantomSegment> segments;
  Dims3 dims{0, 0, 0};
  Spacing3 spacing{1, 1, 1};
};

struct PhantomTree {
  MaskVolume mask;
  LabelVolume labels;
  BranchTable table;
};

namespace detail {

inline double point_segment_dist2(const std::array<double, 3>& p,
                                  const std::array<double, 3>& a,
                                  const std::array<double, 3>& b) {
  const double abx = b[0] - a[0], aby = b[1] - a[1], abz = b[2] - a[2];
  const double apx = p[0] - a[0], apy = p[1] - a[1], apz = p[2] - a[2];
  const double len2 = abx * abx + aby * aby + abz * abz;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp((apx * abx + apy * aby + apz * abz) / len2, 0.0, 1.0);
  const double dx = apx - t * abx, dy = apy - t * aby, dz = apz - t * abz;
  return dx * dx + dy * dy + dz * dz;
}

inline void validate_phantom_spec(const PhantomSpec& spec) {
  if (spec.segments.empty())
    throw std::invalid_argument("phantom spec has no segments");
  for (int a = 0; a < 3; ++a) {
    if (spec.dims[a] <= 0) throw std::invalid_argument("phantom dims must be positive");
    if (!(spec.spacing[a] > 0.0))
      throw std::invalid_argument("phantom spacing must be positive");
  }
  std::vector<char> seen(spec.segments.size() + 1, 0);
  for (const auto& seg : spec.segments) {
    if (!(seg.radius_mm > 0.0))
      throw std::invalid_argument("phantom segment radius must be positive");
    if (seg.id == 0 || seg.id > spec.segments.size() || seen[seg.id])
      throw std::invalid_argument("phantom segment ids must be contiguous from 1");
    seen[seg.id] = 1;
    for (int a = 0; a < 3; ++a) {
      const double extent = spec.dims[a] * spec.spacing[a];
      if (seg.start_mm[a] < 0 || seg.start_mm[a] > extent || seg.end_mm[a] < 0 ||
          seg.end_mm[a] > extent)
        throw std::invalid_argument("phantom segment endpoint outside the volume extent");
    }
  }
}

}  // namespace detail

inline PhantomTree generate_tree(const PhantomSpec& spec) {
  detail::validate_phantom_spec(spec);
  const Dims3& d = spec.dims;
  const Spacing3& s = spec.spacing;

  PhantomTree out;
  out.mask = MaskVolume(d, s, std::uint8_t{0});
  out.labels = LabelVolume(d, s, 0u);
  std::vector<double> best_d2(static_cast<std::size_t>(out.mask.size()),
                              std::numeric_limits<double>::infinity());

  for (const auto& seg : spec.segments) {
    const double r = seg.radius_mm;
    const double r2 = r * r;
    // Capsule bounding box in voxel indices (voxel centers at (i+0.5)*s).
    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      const double mn = std::min(seg.start_mm[a], seg.end_mm[a]) - r;
      const double mx = std::max(seg.start_mm[a], seg.end_mm[a]) + r;
      lo[a] = std::max(0, static_cast<int>(std::floor(mn / s[a] - 0.5)));
      hi[a] = std::min(d[a] - 1, static_cast<int>(std::ceil(mx / s[a] - 0.5)));
    }
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x) {
          const std::array<double, 3> center = {(x + 0.5) * s[0], (y + 0.5) * s[1],
                                                (z + 0.5) * s[2]};
          const double d2 = detail::point_segment_dist2(center, seg.start_mm, seg.end_mm);
          if (d2 > r2) continue;
          const std::size_t idx =
              static_cast<std::size_t>(out.mask.linear_index(x, y, z));
          out.mask.data()[idx] = 1;
          if (d2 < best_d2[idx] ||
              (d2 == best_d2[idx] && seg.id < out.labels.data()[idx])) {
            best_d2[idx] = d2;
            out.labels.data()[idx] = seg.id;
          }
        }
  }

  if (count_foreground(out.mask) == 0)
    throw std::invalid_argument("phantom spec rasterizes to an empty mask");

  out.table.rows.resize(spec.segments.size());
  for (const auto& seg : spec.segments) {
    BranchRow& row = out.table.rows[seg.id - 1];
    row.id = seg.id;
    row.radius_mm = seg.radius_mm;
    row.skeleton_voxels = 0;  // declared geometry, not a thinning product
  }
  count_reconstructed(out.table, out.labels);
  return out;
}

/// Parse a phantom spec from its JSON form:
/// {"dims":[...], "spacing_mm":[...],
///  "segments":[{"start":[...], "end":[...], "radius_mm":..., "id":...}]}
inline PhantomSpec parse_phantom_spec(const nlohmann::json& j) {
  PhantomSpec spec;
  try {
    for (int a = 0; a < 3; ++a) spec.dims[a] = j.at("dims").at(a).get<int>();
    for (int a = 0; a < 3; ++a) spec.spacing[a] = j.at("spacing_mm").at(a).get<double>();
    for (const auto& js : j.at("segments")) {
      PhantomSegment seg;
      for (int a = 0; a < 3; ++a) seg.start_mm[a] = js.at("start").at(a).get<double>();
      for (int a = 0; a < 3; ++a) seg.end_mm[a] = js.at("end").at(a).get<double>();
      seg.radius_mm = js.at("radius_mm").get<double>();
      seg.id = js.at("id").get<std::uint32_t>();
      spec.segments.push_back(seg);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed phantom spec JSON: ") + e.what());
  }
  return spec;
}

inline nlohmann::json phantom_spec_json(const PhantomSpec& spec) {
  nlohmann::json j;
  j["dims"] = {spec.dims[0], spec.dims[1], spec.dims[2]};
  j["spacing_mm"] = {spec.spacing[0], spec.spacing[1], spec.spacing[2]};
  j["segments"] = nlohmann::json::array();
  for (const auto& seg : spec.segments) {
    nlohmann::json js;
    js["start"] = {seg.start_mm[0], seg.start_mm[1], seg.start_mm[2]};
    js["end"] = {seg.end_mm[0], seg.end_mm[1], seg.end_mm[2]};
    js["radius_mm"] = seg.radius_mm;
    js["id"] = seg.id;
    j["segments"].push_back(js);
  }
  return j;
}

}  // namespace vesselscale
