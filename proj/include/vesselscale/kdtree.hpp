// Exact k-nearest-neighbor search over voxel coordinates under the
// anisotropic physical metric of dist2_mm(). Neighbors are ordered by the
// lexicographic key (squared distance, tie_key): candidates at exactly equal
// distance are resolved by the caller-provided 64-bit tie key, so results are
// reproducible and match a brute-force scan candidate for candidate.
//
// Coordinates are kept as integers and all distance terms are computed with
// the canonical spacing^2 * delta^2 form; axis pruning therefore never
// discards an exact tie.

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "vesselscale/volume.hpp"

namespace vesselscale {

struct KdNeighbor {
  double d2 = 0.0;
  std::uint64_t tie_key = 0;
  std::int32_t point = -1;  // index into the build-time point array

  friend bool operator<(const KdNeighbor& a, const KdNeighbor& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    return a.tie_key < b.tie_key;
  }
};

class VoxelKdTree {
 public:
  VoxelKdTree() = default;

  VoxelKdTree(std::vector<VoxelCoord> points, std::vector<std::uint64_t> tie_keys,
              Spacing3 spacing)
      : points_(std::move(points)), keys_(std::move(tie_keys)), spacing_(spacing) {
    if (points_.empty()) throw std::invalid_argument("VoxelKdTree: empty point set");
    if (keys_.size() != points_.size())
      throw std::invalid_argument("VoxelKdTree: key/point count mismatch");
    for (int a = 0; a < 3; ++a) s2_[a] = spacing_[a] * spacing_[a];
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::int32_t>(i);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, static_cast<std::int32_t>(points_.size()));
  }

  std::size_t size() const { return points_.size(); }
  const VoxelCoord& point(std::int32_t i) const { return points_[i]; }
  std::uint64_t tie_key(std::int32_t i) const { return keys_[i]; }

  /// k nearest neighbors of `query`, ascending (d2, tie_key). k is clamped
  /// to the point count.
  void nearest(const VoxelCoord& query, int k, std::vector<KdNeighbor>& out) const {
    k = std::min<int>(k, static_cast<int>(points_.size()));
    out.clear();
    if (k <= 0) return;
    heap_.clear();
    search(root_, query, k);
    out.assign(heap_.begin(), heap_.end());
    std::sort(out.begin(), out.end());
  }

  /// Single nearest neighbor under (d2, tie_key).
  KdNeighbor nearest_one(const VoxelCoord& query) const {
    best_ = KdNeighbor{std::numeric_limits<double>::infinity(),
                       std::numeric_limits<std::uint64_t>::max(), -1};
    search_one(root_, query);
    return best_;
  }

 private:
  static constexpr int kLeafSize = 12;

  struct Node {
    std::int32_t begin = 0, end = 0;  // leaf range in order_
    std::int32_t left = -1, right = -1;
    int axis = 0;
    int split = 0;  // integer coordinate; left holds coord <= split
  };

  int coord_axis(const VoxelCoord& v, int axis) const {
    return axis == 0 ? v.x : (axis == 1 ? v.y : v.z);
  }

  std::int32_t build(std::int32_t begin, std::int32_t end) {
    Node node;
    node.begin = begin;
    node.end = end;
    const std::int32_t id = static_cast<std::int32_t>(nodes_.size());
    if (end - begin <= kLeafSize) {
      nodes_.push_back(node);
      return id;
    }
    int lo[3] = {INT32_MAX, INT32_MAX, INT32_MAX};
    int hi[3] = {INT32_MIN, INT32_MIN, INT32_MIN};
    for (std::int32_t i = begin; i < end; ++i) {
      const VoxelCoord& p = points_[order_[i]];
      const int c[3] = {p.x, p.y, p.z};
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], c[a]);
        hi[a] = std::max(hi[a], c[a]);
      }
    }
    int axis = 0;
    double best_spread = -1.0;
    for (int a = 0; a < 3; ++a) {
      const double spread = (hi[a] - lo[a]) * spacing_[a];
      if (spread > best_spread) {
        best_spread = spread;
        axis = a;
      }
    }
    if (hi[axis] == lo[axis]) {  // all points coincide on every axis
      nodes_.push_back(node);
      return id;
    }
    const std::int32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::int32_t a, std::int32_t b) {
                       const int ca = coord_axis(points_[a], axis);
                       const int cb = coord_axis(points_[b], axis);
                       if (ca != cb) return ca < cb;
                       return keys_[a] < keys_[b];
                     });
    node.axis = axis;
    node.split = coord_axis(points_[order_[mid]], axis);
    nodes_.push_back(node);
    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void consider(const VoxelCoord& query, std::int32_t pt, int k) const {
    KdNeighbor cand;
    cand.d2 = dist2_mm(query, points_[pt], spacing_);
    cand.tie_key = keys_[pt];
    cand.point = pt;
    if (static_cast<int>(heap_.size()) < k) {
      heap_.push_back(cand);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (cand < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = cand;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  void search(std::int32_t node_id, const VoxelCoord& query, int k) const {
    const Node& node = nodes_[node_id];
    if (node.left < 0) {
      for (std::int32_t i = node.begin; i < node.end; ++i) consider(query, order_[i], k);
      return;
    }
    const double dq = static_cast<double>(coord_axis(query, node.axis) - node.split);
    const double axis_d2 = s2_[node.axis] * (dq * dq);
    const std::int32_t near = dq <= 0 ? node.left : node.right;
    const std::int32_t far = dq <= 0 ? node.right : node.left;
    search(near, query, k);
    // Visit the far side unless every point there is strictly farther than
    // the current worst kept neighbor (equality must still be visited).
    if (static_cast<int>(heap_.size()) < k || axis_d2 <= heap_.front().d2)
      search(far, query, k);
  }

  void search_one(std::int32_t node_id, const VoxelCoord& query) const {
    const Node& node = nodes_[node_id];
    if (node.left < 0) {
      for (std::int32_t i = node.begin; i < node.end; ++i) {
        const std::int32_t pt = order_[i];
        KdNeighbor cand{dist2_mm(query, points_[pt], spacing_), keys_[pt], pt};
        if (cand < best_) best_ = cand;
      }
      return;
    }
    const double dq = static_cast<double>(coord_axis(query, node.axis) - node.split);
    const double axis_d2 = s2_[node.axis] * (dq * dq);
    const std::int32_t near = dq <= 0 ? node.left : node.right;
    const std::int32_t far = dq <= 0 ? node.right : node.left;
    search_one(near, query);
    if (axis_d2 <= best_.d2) search_one(far, query);
  }

  std::vector<VoxelCoord> points_;
  std::vector<std::uint64_t> keys_;
  std::vector<std::int32_t> order_;
  std::vector<Node> nodes_;
  Spacing3 spacing_{1, 1, 1};
  double s2_[3] = {1, 1, 1};
  std::int32_t root_ = -1;
  mutable std::vector<KdNeighbor> heap_;
  mutable KdNeighbor best_;
};

}  // namespace vesselscale
