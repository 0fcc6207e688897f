#pragma once

#include "limbfit/losses.hpp"

namespace limbfit {

// Gradient of a loss w.r.t. one pose's joint positions, same length as the
// joint list.
using PoseGrad = std::vector<Vec3>;

PoseGrad zero_grad(int joints);

// Each function accumulates scale * d(loss)/d(joints) into grad. The losses
// use subgradient conventions at kinks: d|x|/dx = 0 at x = 0 and the radial
// direction is dropped at r = 0, matching the forward evaluations.
void p2l_gradient(const PointCloud& cloud, const SoftAssignment& w, const SkeletonPose& pose,
                  const SkeletonTopology& topo, const LossConfig& cfg, double scale,
                  PoseGrad& grad);

void sym_gradient(const PointCloud& cloud, const SoftAssignment& w, const AssignmentContext& ctx,
                  const SkeletonPose& pose, const SkeletonTopology& topo, double h,
                  const LossConfig& cfg, double scale, PoseGrad& grad);

void j2p_gradient(const PointCloud& cloud, const SoftAssignment& w, const SkeletonPose& pose,
                  const LossConfig& cfg, double scale, PoseGrad& grad);

// Flow loss touches both frames' poses.
void flow_gradient(const FramePair& pair, const SkeletonTopology& topo, const LossConfig& cfg,
                   double scale, PoseGrad& grad_t, PoseGrad& grad_t1);

// Gradient of the full stage-two objective over a sequence. The segmentation
// term is constant in the poses and contributes nothing.
std::vector<PoseGrad> stage2_gradient(const SequenceData& seq,
                                      const std::vector<SkeletonPose>& poses,
                                      const SkeletonTopology& topo, const LossConfig& cfg);

}  // namespace limbfit
