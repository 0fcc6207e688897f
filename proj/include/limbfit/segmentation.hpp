#pragma once

#include "limbfit/synth.hpp"
#include "limbfit/types.hpp"

namespace limbfit {

struct ClusterLabeling {
  std::vector<int> labels;   // per point, in [0, K)
  std::vector<Vec3> centers;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // one entry per Lloyd iteration

  int k() const { return static_cast<int>(centers.size()); }
};

// Lloyd iterations from a k-means++ start, run to an assignment fixpoint or
// max_iters. Empty clusters are reseeded at the point farthest from its
// current center. Deterministic per seed.
ClusterLabeling kmeans(const std::vector<Vec3>& points, int k, std::uint64_t seed,
                       int max_iters = 100);

// Symmetric Chamfer distance: mean nearest-neighbor distance from a to b plus
// the same from b to a.
double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// Minimum-total-cost bijection between the clusters of two frames under
// inter-cluster Chamfer distance; out[i] is the frame-t1 cluster matched to
// frame-t cluster i.
std::vector<int> match_clusters(const ClusterLabeling& lab_t, const std::vector<Vec3>& pts_t,
                                const ClusterLabeling& lab_t1,
                                const std::vector<Vec3>& pts_t1);

// Clusters every frame independently, then chains match_clusters so cluster
// indices stay consistent with frame 0.
std::vector<ClusterLabeling> propagate_labels(const std::vector<std::vector<Vec3>>& frames,
                                              int k, std::uint64_t seed);

// Row-stochastic one-hot matrix from integer labels.
SoftAssignment to_one_hot(const std::vector<int>& labels, int num_classes);

struct BackgroundFilterConfig {
  double ground_z = 0.10;    // points below are background
  double body_radius = 1.5;  // distance from the robust center beyond which
                             // points are background
};

// Coordinate-wise median.
Vec3 median_center(const std::vector<Vec3>& points);

// 1 marks background per the ground-height / body-radius heuristic.
std::vector<char> background_mask(const std::vector<Vec3>& points,
                                  const BackgroundFilterConfig& config);

// Rigid transform standing the rest-pose template at the cloud's center (xy)
// on the ground, yawed so the body's +x axis points at the sensor.
RigidTransform template_placement(const CapsuleBody& body, const Vec3& cloud_center,
                                  const Vec3& sensor);

// Maps cluster centers to part classes by minimum-cost matching against the
// reference points of a body template stood at the cloud's center and turned
// toward the sensor. Class references are limb midpoints (joint positions for
// classes without limbs). Returns the class of each cluster.
std::vector<int> map_clusters_to_classes(const std::vector<Vec3>& centers,
                                         const Vec3& cloud_center, const CapsuleBody& body,
                                         const Vec3& sensor);

// Full label-free pipeline over a sequence: background pre-filter, per-frame
// clustering with propagated indices, template-based class mapping from frame
// 0, one-hot assignments sized to the body's classes (filtered points go to
// the background column).
std::vector<SoftAssignment> segment_sequence(const std::vector<const PointCloud*>& clouds,
                                             int k, std::uint64_t seed,
                                             const CapsuleBody& template_body,
                                             const Vec3& sensor,
                                             const BackgroundFilterConfig& config);

}  // namespace limbfit
