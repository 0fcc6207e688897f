#pragma once

#include "limbfit/geometry.hpp"
#include "limbfit/types.hpp"

namespace limbfit {

struct FlowField {
  std::vector<Vec3> forward;   // per frame-t point
  std::vector<Vec3> backward;  // per frame-t1 point
};

// Exact flow through the limb rigid transforms of the two frames; requires
// attachments on both clouds.
FlowField gt_flow_provider(const PointCloud& cloud_t, const PointCloud& cloud_t1,
                           const std::vector<RigidTransform>& transforms_t,
                           const std::vector<RigidTransform>& transforms_t1);

// Nearest-neighbor displacement field, both directions.
FlowField nn_flow(const PointCloud& cloud_t, const PointCloud& cloud_t1);

// Per-class rigid estimate: centroid-seeded nearest-neighbor correspondences
// within a class, refit and re-paired until the matching stabilizes, giving a
// least-squares rotation+translation per part (classes with fewer than 3
// points fall back to the centroid translation; classes missing from either
// frame get zero flow).
FlowField rigid_part_flow(const PointCloud& cloud_t, const std::vector<int>& labels_t,
                          const PointCloud& cloud_t1, const std::vector<int>& labels_t1);

// Least-squares rigid alignment of paired point sets: finds (R, t) minimizing
// sum |R a_i + t - b_i|^2. Needs >= 3 pairs for a determined rotation.
RigidTransform kabsch(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

}  // namespace limbfit
