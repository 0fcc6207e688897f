#pragma once

#include <functional>

#include "limbfit/gradients.hpp"

namespace limbfit {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  void reset(Eigen::Index n) {
    m = Eigen::VectorXd::Zero(n);
    v = Eigen::VectorXd::Zero(n);
    step = 0;
  }
};

// One Adam update with bias correction:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               const AdamConfig& cfg);

// Pose list <-> flat parameter vector (x y z per joint, frames concatenated).
Eigen::VectorXd flatten_poses(const std::vector<SkeletonPose>& poses);
std::vector<SkeletonPose> unflatten_poses(const Eigen::VectorXd& params, int frames, int joints);

struct FitOptions {
  AdamConfig adam;
  int iterations = 100;
};

struct FitTrace {
  std::vector<double> loss_history;  // loss at each iterate, final included
  double initial_loss = 0.0;
  double best_loss = 0.0;
  int best_iteration = 0;
};

// Minimizes the stage-two objective over all frame poses jointly and returns
// the best iterate seen. Throws NonFiniteLoss if the objective or gradient
// stops being finite.
std::vector<SkeletonPose> fit_sequence(const SequenceData& seq,
                                       const std::vector<SkeletonPose>& init,
                                       const SkeletonTopology& topo, const LossConfig& cfg,
                                       const FitOptions& opts, FitTrace* trace = nullptr);

using SequenceObjective = std::function<double(const std::vector<SkeletonPose>&)>;

// Relative deviation between an analytic gradient and central finite
// differences of f: the largest per-coordinate difference divided by the
// largest gradient magnitude, max|a - n| / max(max|a|, max|n|, 1e-8). Scaling
// by the gradient's own magnitude keeps truncation noise on near-zero
// coordinates from dominating the result.
double finite_diff_check(const SequenceObjective& f, const std::vector<SkeletonPose>& poses,
                         const std::vector<PoseGrad>& analytic, double step);

}  // namespace limbfit
