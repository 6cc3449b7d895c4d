// Branch decomposition of a curve skeleton and its volumetric
// reconstruction.
//
// label_branches: classify skeleton voxels by 26-degree (endpoint <= 1,
// regular = 2, junction >= 3), remove junction voxels, label the remaining
// connected components as branches in ascending order of their smallest
// linear index, then give every junction voxel the lowest id among its
// adjacent branches. Junction voxels reachable only through other junction
// voxels inherit ids by repeated min-propagation; a junction-only component
// with no adjacent branch at all becomes its own branch.
//
// local_radius: per skeleton voxel, the largest of the physical distances to
// the m nearest voxels of the surface's outer (background) shell, all of
// them when the shell is smaller than m. Equal distances are ordered by
// shell linear index. Measuring to the first voxels past the wall keeps the
// estimate from undershooting the true radius by a full voxel.
//
// branch_radius: per-branch median of the local radii; even counts average
// the two middle values.
//
// reconstruct_branches: every foreground voxel takes the branch id of its
// nearest labeled skeleton voxel, ties resolved by smaller branch id and
// then smaller skeleton linear index; exact against a brute-force scan.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vesselscale/kdtree.hpp"
#include "vesselscale/skeleton.hpp"
#include "vesselscale/volume.hpp"

namespace vesselscale {

struct LabeledSkeleton {
  std::vector<VoxelCoord> voxels;       // ascending linear index
  std::vector<std::uint32_t> branch_ids;  // aligned with voxels, 1..branch_count
  std::uint32_t branch_count = 0;
  Dims3 dims{0, 0, 0};
};

struct LocalRadiusMap {
  std::vector<double> radius_mm;  // aligned with the skeleton voxel list
  int neighbor_count = 0;         // m
};

struct BranchRow {
  std::uint32_t id = 0;
  double radius_mm = 0.0;
  std::uint64_t skeleton_voxels = 0;
  std::uint64_t reconstructed_voxels = 0;
};

struct BranchTable {
  std::vector<BranchRow> rows;  // ascending id, ids contiguous 1..n_b
};

inline LabeledSkeleton label_branches(const Skeleton& skel) {
  if (skel.voxels.empty())
    throw std::invalid_argument("label_branches: empty skeleton (no vasculature)");

  const std::size_t q = skel.voxels.size();
  const Dims3& dims = skel.dims;
  const std::int64_t nvox =
      static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];

  // voxel linear index -> position in the skeleton list
  std::vector<std::int32_t> lookup(static_cast<std::size_t>(nvox), -1);
  auto linear = [&](const VoxelCoord& v) {
    return v.x + static_cast<std::int64_t>(dims[0]) *
                     (v.y + static_cast<std::int64_t>(dims[1]) * v.z);
  };
  for (std::size_t i = 0; i < q; ++i) lookup[static_cast<std::size_t>(linear(skel.voxels[i]))] =
      static_cast<std::int32_t>(i);

  auto in_bounds = [&](int x, int y, int z) {
    return x >= 0 && x < dims[0] && y >= 0 && y < dims[1] && z >= 0 && z < dims[2];
  };
  auto neighbor_entries = [&](std::size_t i, std::vector<std::int32_t>& out) {
    out.clear();
    const VoxelCoord& v = skel.voxels[i];
    for (const auto& o : kTwentySixNeighbors) {
      const int x = v.x + o[0], y = v.y + o[1], z = v.z + o[2];
      if (!in_bounds(x, y, z)) continue;
      const std::int32_t j = lookup[static_cast<std::size_t>(
          x + static_cast<std::int64_t>(dims[0]) *
                  (y + static_cast<std::int64_t>(dims[1]) * z))];
      if (j >= 0) out.push_back(j);
    }
  };

  std::vector<std::int32_t> nbrs;
  std::vector<std::uint8_t> junction(q, 0);
  for (std::size_t i = 0; i < q; ++i) {
    neighbor_entries(i, nbrs);
    junction[i] = nbrs.size() >= 3 ? 1 : 0;
  }

  std::vector<std::uint32_t> ids(q, 0);
  std::uint32_t next_id = 0;
  std::vector<std::size_t> stack;

  // Branches: connected components of the non-junction voxels, labeled in
  // ascending order of smallest linear index (the voxel list is sorted).
  for (std::size_t seed = 0; seed < q; ++seed) {
    if (junction[seed] || ids[seed] != 0) continue;
    ++next_id;
    ids[seed] = next_id;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      neighbor_entries(cur, nbrs);
      for (std::int32_t nb : nbrs) {
        const auto ni = static_cast<std::size_t>(nb);
        if (!junction[ni] && ids[ni] == 0) {
          ids[ni] = next_id;
          stack.push_back(ni);
        }
      }
    }
  }

  // Junction voxels adopt the lowest id among adjacent branch voxels;
  // junction-junction chains resolve by min-propagation in rounds.
  bool progressed = true;
  while (progressed) {
    progressed = false;
    std::vector<std::pair<std::size_t, std::uint32_t>> updates;
    for (std::size_t i = 0; i < q; ++i) {
      if (!junction[i] || ids[i] != 0) continue;
      std::uint32_t best = 0;
      neighbor_entries(i, nbrs);
      for (std::int32_t nb : nbrs) {
        const std::uint32_t id = ids[static_cast<std::size_t>(nb)];
        if (id != 0 && (best == 0 || id < best)) best = id;
      }
      if (best != 0) updates.emplace_back(i, best);
    }
    for (const auto& [i, id] : updates) {
      ids[i] = id;
      progressed = true;
    }
  }

  // Leftovers are junction-only components isolated from every branch; each
  // becomes a branch of its own.
  for (std::size_t seed = 0; seed < q; ++seed) {
    if (ids[seed] != 0) continue;
    ++next_id;
    ids[seed] = next_id;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      neighbor_entries(cur, nbrs);
      for (std::int32_t nb : nbrs) {
        const auto ni = static_cast<std::size_t>(nb);
        if (ids[ni] == 0) {
          ids[ni] = next_id;
          stack.push_back(ni);
        }
      }
    }
  }

  LabeledSkeleton out;
  out.voxels = skel.voxels;
  out.branch_ids = std::move(ids);
  out.branch_count = next_id;
  out.dims = dims;
  return out;
}

/// Local radius per skeleton voxel: the m-th smallest physical distance to
/// the surface's outer shell (ties by shell linear index). If the shell has
/// fewer than m voxels, all of them are used.
inline LocalRadiusMap local_radius(const Skeleton& skel, const SurfaceSet& surface,
                                   const Spacing3& spacing, int m) {
  if (m < 1) throw std::invalid_argument("local_radius: m must be >= 1");
  if (surface.outer_voxels.empty())
    throw std::invalid_argument("local_radius: empty surface set");

  std::vector<std::uint64_t> keys(surface.outer_voxels.size());
  for (std::size_t i = 0; i < surface.outer_voxels.size(); ++i) {
    const VoxelCoord& v = surface.outer_voxels[i];
    keys[i] = static_cast<std::uint64_t>(
        v.x + static_cast<std::int64_t>(surface.dims[0]) *
                  (v.y + static_cast<std::int64_t>(surface.dims[1]) * v.z));
  }
  VoxelKdTree tree(surface.outer_voxels, std::move(keys), spacing);

  LocalRadiusMap out;
  out.neighbor_count = m;
  out.radius_mm.resize(skel.voxels.size());
  std::vector<KdNeighbor> found;
  for (std::size_t i = 0; i < skel.voxels.size(); ++i) {
    tree.nearest(skel.voxels[i], m, found);
    out.radius_mm[i] = std::sqrt(found.back().d2);
  }
  return out;
}

inline double median_of(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

/// Per-branch radius estimate: median of the branch's local radii.
inline BranchTable branch_radius(const LabeledSkeleton& ls, const LocalRadiusMap& lr) {
  if (ls.voxels.size() != lr.radius_mm.size())
    throw std::invalid_argument("branch_radius: skeleton and radius map differ in size");
  std::vector<std::vector<double>> per_branch(ls.branch_count);
  for (std::size_t i = 0; i < ls.voxels.size(); ++i)
    per_branch[ls.branch_ids[i] - 1].push_back(lr.radius_mm[i]);

  BranchTable table;
  table.rows.resize(ls.branch_count);
  for (std::uint32_t j = 0; j < ls.branch_count; ++j) {
    BranchRow& row = table.rows[j];
    row.id = j + 1;
    row.skeleton_voxels = per_branch[j].size();
    row.radius_mm = median_of(per_branch[j]);
  }
  return table;
}

/// Assign every foreground voxel the branch id of its nearest labeled
/// skeleton voxel; skeleton voxels keep their own label, background stays 0.
inline LabelVolume reconstruct_branches(const MaskVolume& mask, const LabeledSkeleton& ls,
                                        const Spacing3& spacing) {
  require_binary(mask, "reconstruct_branches");
  if (ls.voxels.empty())
    throw std::invalid_argument("reconstruct_branches: empty labeled skeleton");

  LabelVolume out(mask.dims(), spacing, 0u);
  for (const auto& v : ls.voxels)
    if (mask.at_or(v.x, v.y, v.z, 0) == 0)
      throw std::invalid_argument(
          "reconstruct_branches: skeleton voxel outside mask foreground");

  // Tie key: branch id in the high bits, linear index in the low 40, so the
  // (distance, branch, index) ordering collapses into (distance, key).
  std::vector<std::uint64_t> keys(ls.voxels.size());
  for (std::size_t i = 0; i < ls.voxels.size(); ++i) {
    const std::uint64_t lin = static_cast<std::uint64_t>(mask.linear_index(ls.voxels[i]));
    keys[i] = (static_cast<std::uint64_t>(ls.branch_ids[i]) << 40) | lin;
  }
  VoxelKdTree tree(ls.voxels, std::move(keys), spacing);

  for (std::size_t i = 0; i < ls.voxels.size(); ++i)
    out.at(ls.voxels[i]) = ls.branch_ids[i];

  const Dims3& d = mask.dims();
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const std::int64_t idx = mask.linear_index(x, y, z);
        if (mask.data()[idx] == 0 || out.data()[idx] != 0) continue;
        const KdNeighbor n = tree.nearest_one({x, y, z});
        out.data()[idx] = static_cast<std::uint32_t>(n.tie_key >> 40);
      }
  return out;
}

/// Fill the reconstructed-voxel counts of `table` from a branch-label volume.
inline void count_reconstructed(BranchTable& table, const LabelVolume& labels) {
  for (auto& row : table.rows) row.reconstructed_voxels = 0;
  for (std::uint32_t v : labels.data()) {
    if (v == 0) continue;
    if (v > table.rows.size())
      throw std::invalid_argument("count_reconstructed: label missing from table");
    ++table.rows[v - 1].reconstructed_voxels;
  }
}

inline std::string branch_table_csv(const BranchTable& table) {
  std::string out = "branch_id,radius_mm,skeleton_voxels,reconstructed_voxels\n";
  for (const auto& row : table.rows) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), row.radius_mm);
    out += std::to_string(row.id);
    out += ',';
    out.append(buf, res.ptr);
    out += ',';
    out += std::to_string(row.skeleton_voxels);
    out += ',';
    out += std::to_string(row.reconstructed_voxels);
    out += '\n';
  }
  return out;
}

inline BranchTable parse_branch_table_csv(const std::string& text, const std::string& src) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("empty branch table CSV: " + src);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "branch_id,radius_mm,skeleton_voxels,reconstructed_voxels")
    throw std::invalid_argument("unexpected branch table CSV header: " + src);
  BranchTable table;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    BranchRow r;
    try {
      std::getline(row, cell, ',');
      r.id = static_cast<std::uint32_t>(std::stoul(cell));
      std::getline(row, cell, ',');
      r.radius_mm = std::stod(cell);
      std::getline(row, cell, ',');
      r.skeleton_voxels = std::stoull(cell);
      std::getline(row, cell, ',');
      r.reconstructed_voxels = std::stoull(cell);
    } catch (const std::exception&) {
      throw std::invalid_argument("malformed branch table CSV row '" + line + "': " + src);
    }
    table.rows.push_back(r);
  }
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    if (table.rows[i].id != i + 1)
      throw std::invalid_argument("branch table CSV ids must be contiguous from 1: " + src);
  return table;
}

}  // namespace vesselscale
