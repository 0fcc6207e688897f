#pragma once

#include "limbfit/optimizer.hpp"
#include "limbfit/types.hpp"

namespace limbfit {

using VisibilityMask = std::vector<std::uint8_t>;

struct Assignment {
  std::vector<int> col_of_row;  // bijection, size n
  double cost = 0.0;

  int size() const { return static_cast<int>(col_of_row.size()); }
};

// Minimum-cost perfect matching on a square cost matrix, O(n^3) with row/
// column potentials. Rows are processed in increasing order and ties resolve
// to the lowest column index, so results are deterministic.
// Rectangular inputs are rejected with NonSquare; pad before calling.
Assignment hungarian(const Eigen::MatrixXd& cost);

// Mean per-joint position error over visible joints, meters.
double mpjpe(const SkeletonPose& pred, const SkeletonPose& gt, const VisibilityMask& visible);

// MPJPE after matching predicted joints to the visible ground-truth joints by
// minimum total Euclidean distance. Invisible joints never enter the match.
double matched_mpjpe(const SkeletonPose& pred, const SkeletonPose& gt,
                     const VisibilityMask& visible);

struct PerturbReport {
  double initial_mpjpe = 0.0;
  double final_mpjpe = 0.0;
  double initial_matched = 0.0;
  double final_matched = 0.0;
  std::vector<double> loss_trace;
};

// Perturbs the ground-truth keypoints of every frame with isotropic Gaussian
// noise of the given sigma, runs the fitter, and reports errors before and
// after (means over frames, all joints visible).
PerturbReport perturb_recovery(const SequenceData& seq, const std::vector<SkeletonPose>& gt,
                               const SkeletonTopology& topo, double sigma,
                               const LossConfig& cfg, const FitOptions& opts,
                               std::uint64_t seed);

}  // namespace limbfit
