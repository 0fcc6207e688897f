#include "limbfit/optimizer.hpp"

#include <cmath>

namespace limbfit {

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               const AdamConfig& cfg) {
  if (params.size() != grad.size()) throw ShapeMismatch("adam_step: param/grad size mismatch");
  if (state.m.size() != params.size()) state.reset(params.size());
  ++state.step;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  params.array() -=
      cfg.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.eps);
}

Eigen::VectorXd flatten_poses(const std::vector<SkeletonPose>& poses) {
  Eigen::Index n = 0;
  for (const SkeletonPose& p : poses) n += 3 * p.joint_count();
  Eigen::VectorXd out(n);
  Eigen::Index k = 0;
  for (const SkeletonPose& p : poses)
    for (const Vec3& v : p.positions) {
      out.segment<3>(k) = v;
      k += 3;
    }
  return out;
}

std::vector<SkeletonPose> unflatten_poses(const Eigen::VectorXd& params, int frames, int joints) {
  if (params.size() != static_cast<Eigen::Index>(3) * frames * joints)
    throw ShapeMismatch("unflatten_poses: size mismatch");
  std::vector<SkeletonPose> poses(frames);
  Eigen::Index k = 0;
  for (int f = 0; f < frames; ++f) {
    poses[f].positions.resize(joints);
    for (int j = 0; j < joints; ++j) {
      poses[f].positions[j] = params.segment<3>(k);
      k += 3;
    }
  }
  return poses;
}

static Eigen::VectorXd flatten_grads(const std::vector<PoseGrad>& grads) {
  Eigen::Index n = 0;
  for (const PoseGrad& g : grads) n += 3 * static_cast<Eigen::Index>(g.size());
  Eigen::VectorXd out(n);
  Eigen::Index k = 0;
  for (const PoseGrad& g : grads)
    for (const Vec3& v : g) {
      out.segment<3>(k) = v;
      k += 3;
    }
  return out;
}

std::vector<SkeletonPose> fit_sequence(const SequenceData& seq,
                                       const std::vector<SkeletonPose>& init,
                                       const SkeletonTopology& topo, const LossConfig& cfg,
                                       const FitOptions& opts, FitTrace* trace) {
  cfg.validate();
  if (seq.frames.empty()) throw InvalidInput("fit_sequence: empty sequence");
  if (init.size() != seq.frames.size())
    throw ShapeMismatch("fit_sequence: pose count != frame count");
  const int frames = static_cast<int>(seq.frames.size());
  const int joints = topo.joint_count();

  Eigen::VectorXd params = flatten_poses(init);
  AdamState state;
  state.reset(params.size());

  auto eval = [&](const Eigen::VectorXd& p) {
    return stage2_objective(seq, unflatten_poses(p, frames, joints), topo, cfg);
  };

  double best_loss = eval(params);
  if (!std::isfinite(best_loss)) throw NonFiniteLoss("fit_sequence: initial loss not finite");
  Eigen::VectorXd best_params = params;
  int best_iter = 0;
  if (trace) {
    trace->loss_history.clear();
    trace->loss_history.push_back(best_loss);
    trace->initial_loss = best_loss;
  }

  for (int it = 1; it <= opts.iterations; ++it) {
    const std::vector<SkeletonPose> poses = unflatten_poses(params, frames, joints);
    const Eigen::VectorXd grad = flatten_grads(stage2_gradient(seq, poses, topo, cfg));
    if (!grad.allFinite())
      throw NonFiniteLoss("fit_sequence: gradient not finite at iteration " + std::to_string(it));
    adam_step(state, params, grad, opts.adam);
    const double loss = eval(params);
    if (!std::isfinite(loss))
      throw NonFiniteLoss("fit_sequence: loss not finite at iteration " + std::to_string(it));
    if (trace) trace->loss_history.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best_params = params;
      best_iter = it;
    }
  }
  if (trace) {
    trace->best_loss = best_loss;
    trace->best_iteration = best_iter;
  }
  return unflatten_poses(best_params, frames, joints);
}

double finite_diff_check(const SequenceObjective& f, const std::vector<SkeletonPose>& poses,
                         const std::vector<PoseGrad>& analytic, double step) {
  if (poses.size() != analytic.size())
    throw ShapeMismatch("finite_diff_check: pose/grad frame count mismatch");
  std::vector<SkeletonPose> work = poses;
  double max_diff = 0.0;
  double scale = 1e-8;
  for (size_t fidx = 0; fidx < poses.size(); ++fidx) {
    if (poses[fidx].positions.size() != analytic[fidx].size())
      throw ShapeMismatch("finite_diff_check: joint count mismatch");
    for (size_t j = 0; j < poses[fidx].positions.size(); ++j) {
      for (int c = 0; c < 3; ++c) {
        const double saved = work[fidx].positions[j][c];
        work[fidx].positions[j][c] = saved + step;
        const double fp = f(work);
        work[fidx].positions[j][c] = saved - step;
        const double fm = f(work);
        work[fidx].positions[j][c] = saved;
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = analytic[fidx][j][c];
        max_diff = std::max(max_diff, std::abs(a - numeric));
        scale = std::max({scale, std::abs(a), std::abs(numeric)});
      }
    }
  }
  return max_diff / scale;
}

}  // namespace limbfit
