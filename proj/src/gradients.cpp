#include "limbfit/gradients.hpp"

#include <cmath>

namespace limbfit {

PoseGrad zero_grad(int joints) { return PoseGrad(joints, Vec3::Zero()); }

static double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void p2l_gradient(const PointCloud& cloud, const SoftAssignment& w, const SkeletonPose& pose,
                  const SkeletonTopology& topo, const LossConfig& cfg, double scale,
                  PoseGrad& grad) {
  if (topo.limb_count() == 0) return;
  const int n_valid = cloud.valid_count();
  if (n_valid == 0) return;
  const double s = scale / (topo.limb_count() * static_cast<double>(n_valid));
  for (const Limb& l : topo.limbs) {
    const Vec3& ya = pose.positions[l.parent];
    const Vec3& yb = pose.positions[l.child];
    Vec3 ga = Vec3::Zero(), gb = Vec3::Zero();
    for (int i = 0; i < cloud.size(); ++i) {
      if (!cloud.is_valid(i)) continue;
      const double wi = w.weights(i, l.child);
      if (wi == 0.0) continue;
      const SegDistJet j = point_segment_distance_jet(cloud.points[i], ya, yb, cfg.eps_len);
      ga += wi * j.dd_dya;
      gb += wi * j.dd_dyb;
    }
    grad[l.parent] += s * ga;
    grad[l.child] += s * gb;
  }
}

void sym_gradient(const PointCloud& cloud, const SoftAssignment& w, const AssignmentContext& ctx,
                  const SkeletonPose& pose, const SkeletonTopology& topo, double h,
                  const LossConfig& cfg, double scale, PoseGrad& grad) {
  if (topo.limb_count() == 0) return;
  const int n_valid = cloud.valid_count();
  if (n_valid == 0) return;
  const double limb_scale = scale / topo.limb_count();
  for (const Limb& l : topo.limbs) {
    const Vec3& ya = pose.positions[l.parent];
    const Vec3& yb = pose.positions[l.child];
    const detail::SymLimbTerms t =
        detail::sym_limb_terms(cloud, w, ctx, ya, yb, l.child, h, cfg);
    const int n = static_cast<int>(t.idx.size());
    if (n == 0) continue;

    Eigen::VectorXd g(n), alpha(n);
    for (int k = 0; k < n; ++k) {
      if (t.skipped[k]) {
        g[k] = 0.0;
        alpha[k] = 0.0;
      } else {
        g[k] = (2.0 / n_valid) * t.outer_w[k] * (t.r[k] - t.rbar[k]);
        alpha[k] = g[k] / t.den[k];
      }
    }
    // d(loss)/dr_k, using that m is symmetric
    Eigen::VectorXd rho = g - t.m * alpha;

    // d(loss)/dz_k through the kernel:
    //   A_ij = alpha_i m_ij (2 (z_i - z_j)/h^2) (r_j - rbar_i)
    //   dL/dz_k = rowsum_k(A) - colsum_k(A)
    Eigen::MatrixXd diff = t.z.replicate(1, n) - t.z.transpose().replicate(n, 1);
    Eigen::MatrixXd rdev = t.r.transpose().replicate(n, 1);
    rdev.colwise() -= t.rbar;
    Eigen::MatrixXd A = (alpha.replicate(1, n).array() * t.m.array() *
                         (2.0 / (h * h) * diff).array() * rdev.array())
                            .matrix();
    Eigen::VectorXd zeta = A.rowwise().sum() - A.colwise().sum().transpose();

    Vec3 ga = Vec3::Zero(), gb = Vec3::Zero();
    for (int k = 0; k < n; ++k) {
      if (rho[k] == 0.0 && zeta[k] == 0.0) continue;
      const LimbCoordJet j = cylindrical_coords_jet(cloud.points[t.idx[k]], ya, yb, cfg.eps_len);
      ga += rho[k] * j.dr_dya + zeta[k] * j.dz_dya;
      gb += rho[k] * j.dr_dyb + zeta[k] * j.dz_dyb;
    }
    grad[l.parent] += limb_scale * ga;
    grad[l.child] += limb_scale * gb;
  }
}

void j2p_gradient(const PointCloud& cloud, const SoftAssignment& w, const SkeletonPose& pose,
                  const LossConfig& cfg, double scale, PoseGrad& grad) {
  const int joints = pose.joint_count();
  if (joints == 0) return;
  for (int j = 0; j < joints; ++j) {
    double total = 0.0;
    Vec3 centroid = Vec3::Zero();
    for (int i = 0; i < cloud.size(); ++i) {
      if (!cloud.is_valid(i)) continue;
      const double wi = w.weights(i, j);
      total += wi;
      centroid += wi * cloud.points[i];
    }
    if (total <= cfg.eps_denom) continue;
    const Vec3 d = pose.positions[j] - centroid / total;
    const double dist = d.norm();
    if (dist == 0.0) continue;
    grad[j] += (scale / joints) * (d / dist);
  }
}

// One direction of the flow term for one limb. Points live in the "from"
// frame; their flowed positions are measured against the "to" frame's limb.
static void flow_side_gradient(const PointCloud& cloud, const SoftAssignment& w, int limb_cls,
                               bool forward, const Vec3& ya_from, const Vec3& yb_from,
                               const Vec3& ya_to, const Vec3& yb_to, const LossConfig& cfg,
                               double scale, Vec3& ga_from, Vec3& gb_from, Vec3& ga_to,
                               Vec3& gb_to) {
  const std::vector<Vec3>& flow = forward ? cloud.forward_flow : cloud.backward_flow;
  if (flow.empty())
    throw MissingFlow(forward ? "flow gradient: forward flow absent"
                              : "flow gradient: backward flow absent");
  const int n_valid = cloud.valid_count();
  if (n_valid == 0) return;
  const double s = scale / n_valid;
  for (int i = 0; i < cloud.size(); ++i) {
    if (!cloud.is_valid(i)) continue;
    const double wi = w.weights(i, limb_cls);
    if (wi == 0.0) continue;
    const LimbCoordJet here = cylindrical_coords_jet(cloud.points[i], ya_from, yb_from, cfg.eps_len);
    const LimbCoordJet there =
        cylindrical_coords_jet(cloud.points[i] + flow[i], ya_to, yb_to, cfg.eps_len);
    const double sr = sgn(there.r - here.r);
    const double sz = sgn(there.z - here.z);
    ga_from += s * wi * (-sr * here.dr_dya - sz * here.dz_dya);
    gb_from += s * wi * (-sr * here.dr_dyb - sz * here.dz_dyb);
    ga_to += s * wi * (sr * there.dr_dya + sz * there.dz_dya);
    gb_to += s * wi * (sr * there.dr_dyb + sz * there.dz_dyb);
  }
}

void flow_gradient(const FramePair& pair, const SkeletonTopology& topo, const LossConfig& cfg,
                   double scale, PoseGrad& grad_t, PoseGrad& grad_t1) {
  if (topo.limb_count() == 0) return;
  const double s = 0.5 * scale / topo.limb_count();
  for (const Limb& l : topo.limbs) {
    const Vec3& a0 = pair.pose_t.positions[l.parent];
    const Vec3& b0 = pair.pose_t.positions[l.child];
    const Vec3& a1 = pair.pose_t1.positions[l.parent];
    const Vec3& b1 = pair.pose_t1.positions[l.child];
    Vec3 ga0 = Vec3::Zero(), gb0 = Vec3::Zero(), ga1 = Vec3::Zero(), gb1 = Vec3::Zero();
    flow_side_gradient(pair.cloud_t, pair.w_t, l.child, true, a0, b0, a1, b1, cfg, s, ga0, gb0,
                       ga1, gb1);
    flow_side_gradient(pair.cloud_t1, pair.w_t1, l.child, false, a1, b1, a0, b0, cfg, s, ga1,
                       gb1, ga0, gb0);
    grad_t[l.parent] += ga0;
    grad_t[l.child] += gb0;
    grad_t1[l.parent] += ga1;
    grad_t1[l.child] += gb1;
  }
}

std::vector<PoseGrad> stage2_gradient(const SequenceData& seq,
                                      const std::vector<SkeletonPose>& poses,
                                      const SkeletonTopology& topo, const LossConfig& cfg) {
  if (seq.frames.empty()) throw InvalidInput("stage2 gradient: empty sequence");
  if (poses.size() != seq.frames.size())
    throw ShapeMismatch("stage2 gradient: pose count != frame count");
  const int frames = static_cast<int>(seq.frames.size());
  std::vector<PoseGrad> grads(frames, zero_grad(topo.joint_count()));
  const double inv_f = 1.0 / frames;
  for (int f = 0; f < frames; ++f) {
    const FrameData& fr = seq.frames[f];
    if (cfg.lambda_p2l != 0.0)
      p2l_gradient(fr.cloud, fr.assignment, poses[f], topo, cfg, cfg.lambda_p2l * inv_f,
                   grads[f]);
    if (cfg.lambda_sym != 0.0) {
      const AssignmentContext ctx = AssignmentContext::build(fr.cloud, fr.assignment);
      sym_gradient(fr.cloud, fr.assignment, ctx, poses[f], topo, cfg.bandwidth, cfg,
                   cfg.lambda_sym * inv_f, grads[f]);
    }
    if (cfg.lambda_j2p != 0.0)
      j2p_gradient(fr.cloud, fr.assignment, poses[f], cfg, cfg.lambda_j2p * inv_f, grads[f]);
  }
  if (frames >= 2 && cfg.lambda_flow != 0.0) {
    const double pair_scale = cfg.lambda_flow / (frames - 1);
    for (int f = 0; f + 1 < frames; ++f) {
      const FramePair pair{seq.frames[f].cloud,      seq.frames[f + 1].cloud,
                           seq.frames[f].assignment, seq.frames[f + 1].assignment,
                           poses[f],                 poses[f + 1]};
      flow_gradient(pair, topo, cfg, pair_scale, grads[f], grads[f + 1]);
    }
  }
  return grads;
}

}  // namespace limbfit
