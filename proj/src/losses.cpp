#include "limbfit/losses.hpp"

#include <algorithm>
#include <cmath>

namespace limbfit {

void LossConfig::validate() const {
  if (lambda_flow < 0 || lambda_p2l < 0 || lambda_sym < 0 || lambda_j2p < 0 ||
      lambda_seg < 0 || lambda_kp < 0)
    throw InvalidInput("loss config: negative weight");
  if (!(bandwidth > 0)) throw InvalidBandwidth("loss config: bandwidth must be positive");
}

LossConfig LossConfig::stage2_defaults() {
  LossConfig c;
  c.lambda_flow = 0.02;
  c.lambda_p2l = 0.01;
  c.lambda_sym = 0.5;
  c.lambda_j2p = 2.0;
  c.lambda_seg = 0.5;
  c.lambda_kp = 0.0;
  c.bandwidth = 0.1;
  return c;
}

LossConfig LossConfig::stage1_defaults() {
  LossConfig c;
  c.lambda_flow = 0.0;
  c.lambda_p2l = 0.0;
  c.lambda_sym = 0.0;
  c.lambda_j2p = 0.0;
  c.lambda_seg = 1.0;
  c.lambda_kp = 0.5;
  return c;
}

LossConfig LossConfig::supp_demo() {
  LossConfig c;
  c.lambda_flow = 0.2;
  c.lambda_p2l = 0.1;
  c.lambda_sym = 5.0;
  c.lambda_j2p = 0.0;
  c.lambda_seg = 0.0;
  c.lambda_kp = 0.0;
  c.bandwidth = 0.1;
  return c;
}

AssignmentContext AssignmentContext::build(const PointCloud& cloud, const SoftAssignment& w) {
  if (w.size() != cloud.size())
    throw ShapeMismatch("assignment rows do not match point count");
  AssignmentContext ctx;
  ctx.valid_idx.reserve(cloud.size());
  for (int i = 0; i < cloud.size(); ++i)
    if (cloud.is_valid(i)) ctx.valid_idx.push_back(i);
  ctx.one_hot = w.is_one_hot();
  const int n = ctx.n_valid();
  if (ctx.one_hot) {
    ctx.labels.resize(n);
    for (int k = 0; k < n; ++k) {
      Eigen::Index best = 0;
      w.weights.row(ctx.valid_idx[k]).maxCoeff(&best);
      ctx.labels[k] = static_cast<int>(best);
    }
  } else {
    const int parts = w.num_classes() - 1;
    Eigen::MatrixXd wp(n, parts);
    for (int k = 0; k < n; ++k) wp.row(k) = w.weights.row(ctx.valid_idx[k]).head(parts);
    ctx.part_sim.noalias() = wp * wp.transpose();
  }
  return ctx;
}

static void check_pose(const SkeletonPose& pose, const SkeletonTopology& topo) {
  if (pose.joint_count() != topo.joint_count())
    throw ShapeMismatch("pose joint count does not match topology");
}

static void check_assignment(const SoftAssignment& w, const PointCloud& cloud,
                             const SkeletonTopology& topo) {
  if (w.size() != cloud.size()) throw ShapeMismatch("assignment rows != point count");
  if (w.num_classes() != topo.num_classes())
    throw ShapeMismatch("assignment columns != J+1");
}

namespace detail {

double flow_side_loss(const PointCloud& cloud, const SoftAssignment& w, int limb_cls,
                      bool forward, const Vec3& ya_from, const Vec3& yb_from,
                      const Vec3& ya_to, const Vec3& yb_to, const LossConfig& cfg) {
  const std::vector<Vec3>& flow = forward ? cloud.forward_flow : cloud.backward_flow;
  if (flow.empty())
    throw MissingFlow(forward ? "flow loss: forward flow absent" : "flow loss: backward flow absent");
  double acc = 0.0;
  int n_valid = 0;
  for (int i = 0; i < cloud.size(); ++i) {
    if (!cloud.is_valid(i)) continue;
    ++n_valid;
    const double wi = w.weights(i, limb_cls);
    if (wi == 0.0) continue;
    const LimbCoords here = cylindrical_coords(cloud.points[i], ya_from, yb_from, cfg.eps_len);
    const LimbCoords there =
        cylindrical_coords(cloud.points[i] + flow[i], ya_to, yb_to, cfg.eps_len);
    acc += wi * (std::abs(there.r - here.r) + std::abs(there.z - here.z));
  }
  return n_valid == 0 ? 0.0 : acc / n_valid;
}

}  // namespace detail

double flow_loss(const FramePair& pair, const SkeletonTopology& topo, const LossConfig& cfg) {
  check_pose(pair.pose_t, topo);
  check_pose(pair.pose_t1, topo);
  check_assignment(pair.w_t, pair.cloud_t, topo);
  check_assignment(pair.w_t1, pair.cloud_t1, topo);
  if (topo.limb_count() == 0) return 0.0;
  double acc = 0.0;
  for (const Limb& l : topo.limbs) {
    const Vec3& a0 = pair.pose_t.positions[l.parent];
    const Vec3& b0 = pair.pose_t.positions[l.child];
    const Vec3& a1 = pair.pose_t1.positions[l.parent];
    const Vec3& b1 = pair.pose_t1.positions[l.child];
    const double ff =
        detail::flow_side_loss(pair.cloud_t, pair.w_t, l.child, true, a0, b0, a1, b1, cfg);
    const double bf =
        detail::flow_side_loss(pair.cloud_t1, pair.w_t1, l.child, false, a1, b1, a0, b0, cfg);
    acc += 0.5 * (ff + bf);
  }
  return acc / topo.limb_count();
}

double p2l_loss(const PointCloud& cloud, const SoftAssignment& w, const SkeletonPose& pose,
                const SkeletonTopology& topo, const LossConfig& cfg) {
  check_pose(pose, topo);
  check_assignment(w, cloud, topo);
  if (topo.limb_count() == 0) return 0.0;
  const int n_valid = cloud.valid_count();
  if (n_valid == 0) return 0.0;
  double acc = 0.0;
  for (const Limb& l : topo.limbs) {
    const Vec3& ya = pose.positions[l.parent];
    const Vec3& yb = pose.positions[l.child];
    double limb_acc = 0.0;
    for (int i = 0; i < cloud.size(); ++i) {
      if (!cloud.is_valid(i)) continue;
      const double wi = w.weights(i, l.child);
      if (wi == 0.0) continue;
      limb_acc += wi * point_segment_distance(cloud.points[i], ya, yb);
    }
    acc += limb_acc / n_valid;
  }
  return acc / topo.limb_count();
}

namespace detail {

SymLimbTerms sym_limb_terms(const PointCloud& cloud, const SoftAssignment& w,
                            const AssignmentContext& ctx, const Vec3& ya, const Vec3& yb,
                            int limb_cls, double h, const LossConfig& cfg) {
  SymLimbTerms t;
  const int n_valid = ctx.n_valid();
  if (n_valid == 0) return t;

  std::vector<int> local;  // positions into ctx.valid_idx
  if (ctx.one_hot) {
    for (int k = 0; k < n_valid; ++k)
      if (ctx.labels[k] == limb_cls) local.push_back(k);
  } else {
    local.resize(n_valid);
    for (int k = 0; k < n_valid; ++k) local[k] = k;
  }
  const int n = static_cast<int>(local.size());
  if (n == 0) return t;

  t.idx.resize(n);
  t.z.resize(n);
  t.r.resize(n);
  t.outer_w.resize(n);
  for (int k = 0; k < n; ++k) {
    const int i = ctx.valid_idx[local[k]];
    t.idx[k] = i;
    const LimbCoords c = cylindrical_coords(cloud.points[i], ya, yb, cfg.eps_len);
    t.z[k] = c.z;
    t.r[k] = c.r;
    t.outer_w[k] = w.weights(i, limb_cls);
  }

  // kernel matrix, then similarity weighting for soft assignments
  Eigen::MatrixXd diff = t.z.replicate(1, n) - t.z.transpose().replicate(n, 1);
  t.m = (-(diff.array() / h).square()).exp().matrix();
  if (!ctx.one_hot) {
    for (int k = 0; k < n; ++k)
      for (int k2 = 0; k2 < n; ++k2) t.m(k, k2) *= ctx.part_sim(local[k], local[k2]);
  }

  t.den = t.m.rowwise().sum();
  Eigen::VectorXd num = t.m * t.r;
  t.rbar.resize(n);
  t.skipped.assign(n, false);
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    if (t.den[k] <= cfg.eps_denom) {
      t.skipped[k] = true;
      t.rbar[k] = t.r[k];
      continue;
    }
    t.rbar[k] = num[k] / t.den[k];
    const double d = t.r[k] - t.rbar[k];
    acc += t.outer_w[k] * d * d;
  }
  const int total_valid = cloud.valid_count();
  t.loss = total_valid == 0 ? 0.0 : acc / total_valid;
  return t;
}

}  // namespace detail

double sym_loss(const PointCloud& cloud, const SoftAssignment& w, const AssignmentContext& ctx,
                const SkeletonPose& pose, const SkeletonTopology& topo, double h,
                const LossConfig& cfg) {
  check_pose(pose, topo);
  check_assignment(w, cloud, topo);
  if (!(h > 0)) throw InvalidBandwidth("sym_loss: h must be positive");
  if (topo.limb_count() == 0) return 0.0;
  double acc = 0.0;
  for (const Limb& l : topo.limbs) {
    acc += detail::sym_limb_terms(cloud, w, ctx, pose.positions[l.parent],
                                  pose.positions[l.child], l.child, h, cfg)
               .loss;
  }
  return acc / topo.limb_count();
}

double sym_loss(const PointCloud& cloud, const SoftAssignment& w, const SkeletonPose& pose,
                const SkeletonTopology& topo, double h, const LossConfig& cfg) {
  return sym_loss(cloud, w, AssignmentContext::build(cloud, w), pose, topo, h, cfg);
}

double j2p_loss(const PointCloud& cloud, const SoftAssignment& w, const SkeletonPose& pose,
                const LossConfig& cfg, std::vector<int>* empty_parts) {
  if (w.size() != cloud.size()) throw ShapeMismatch("j2p: assignment rows != point count");
  const int joints = pose.joint_count();
  if (w.num_classes() != joints + 1) throw ShapeMismatch("j2p: assignment columns != J+1");
  if (joints == 0) return 0.0;
  double acc = 0.0;
  for (int j = 0; j < joints; ++j) {
    double total = 0.0;
    Vec3 centroid = Vec3::Zero();
    for (int i = 0; i < cloud.size(); ++i) {
      if (!cloud.is_valid(i)) continue;
      const double wi = w.weights(i, j);
      total += wi;
      centroid += wi * cloud.points[i];
    }
    if (total <= cfg.eps_denom) {
      if (empty_parts) empty_parts->push_back(j);
      continue;
    }
    acc += (pose.positions[j] - centroid / total).norm();
  }
  return acc / joints;
}

double seg_cross_entropy(const SoftAssignment& pred, const SoftAssignment& gt, double eps_prob) {
  if (pred.weights.rows() != gt.weights.rows() || pred.weights.cols() != gt.weights.cols())
    throw ShapeMismatch("seg_cross_entropy: shape mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pred.weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < pred.weights.cols(); ++j) {
      const double g = gt.weights(i, j);
      if (g == 0.0) continue;
      acc -= g * std::log(std::max(pred.weights(i, j), eps_prob));
    }
  }
  return acc;
}

double kp_l2(const SkeletonPose& pred, const SkeletonPose& gt) {
  if (pred.joint_count() != gt.joint_count()) throw ShapeMismatch("kp_l2: joint count mismatch");
  if (pred.joint_count() == 0) return 0.0;
  double acc = 0.0;
  for (int j = 0; j < pred.joint_count(); ++j)
    acc += (pred.positions[j] - gt.positions[j]).norm();
  return acc / pred.joint_count();
}

double stage1_objective(const SkeletonPose& pred_pose, const SkeletonPose& gt_pose,
                        const SoftAssignment& pred_w, const SoftAssignment& gt_w,
                        const LossConfig& cfg) {
  return cfg.lambda_kp * kp_l2(pred_pose, gt_pose) +
         cfg.lambda_seg * seg_cross_entropy(pred_w, gt_w, cfg.eps_prob);
}

// Surrogate segmentation target: one-hot of the argmax labels, valid rows only.
static double seg_surrogate_ce(const PointCloud& cloud, const SoftAssignment& w,
                               const LossConfig& cfg) {
  double acc = 0.0;
  for (int i = 0; i < cloud.size(); ++i) {
    if (!cloud.is_valid(i)) continue;
    Eigen::Index best = 0;
    w.weights.row(i).maxCoeff(&best);
    acc -= std::log(std::max(w.weights(i, best), cfg.eps_prob));
  }
  return acc;
}

LossBreakdown stage2_terms(const SequenceData& seq, const std::vector<SkeletonPose>& poses,
                           const SkeletonTopology& topo, const LossConfig& cfg) {
  if (seq.frames.empty()) throw InvalidInput("stage2: empty sequence");
  if (poses.size() != seq.frames.size())
    throw ShapeMismatch("stage2: pose count != frame count");
  LossBreakdown b;
  const int frames = static_cast<int>(seq.frames.size());
  for (int f = 0; f < frames; ++f) {
    const FrameData& fr = seq.frames[f];
    b.p2l += p2l_loss(fr.cloud, fr.assignment, poses[f], topo, cfg);
    b.sym += sym_loss(fr.cloud, fr.assignment, poses[f], topo, cfg.bandwidth, cfg);
    b.j2p += j2p_loss(fr.cloud, fr.assignment, poses[f], cfg);
    b.seg += seg_surrogate_ce(fr.cloud, fr.assignment, cfg);
  }
  b.p2l /= frames;
  b.sym /= frames;
  b.j2p /= frames;
  b.seg /= frames;
  if (frames >= 2) {
    for (int f = 0; f + 1 < frames; ++f) {
      const FramePair pair{seq.frames[f].cloud,      seq.frames[f + 1].cloud,
                           seq.frames[f].assignment, seq.frames[f + 1].assignment,
                           poses[f],                 poses[f + 1]};
      b.flow += flow_loss(pair, topo, cfg);
    }
    b.flow /= (frames - 1);
  }
  return b;
}

double stage2_objective(const SequenceData& seq, const std::vector<SkeletonPose>& poses,
                        const SkeletonTopology& topo, const LossConfig& cfg) {
  return stage2_terms(seq, poses, topo, cfg).weighted_total(cfg);
}

}  // namespace limbfit
