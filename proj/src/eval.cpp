#include "limbfit/eval.hpp"

#include <cmath>
#include <limits>

#include "limbfit/rng.hpp"

namespace limbfit {

Assignment hungarian(const Eigen::MatrixXd& cost) {
  if (cost.rows() != cost.cols()) throw NonSquare("hungarian: cost matrix must be square");
  if (!cost.allFinite()) throw InvalidInput("hungarian: non-finite cost entries");
  const int n = static_cast<int>(cost.rows());
  Assignment out;
  out.col_of_row.assign(n, -1);
  if (n == 0) return out;

  const double inf = std::numeric_limits<double>::infinity();
  // potentials; p[j] = row currently matched to column j (1-based, 0 = none)
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  for (int j = 1; j <= n; ++j) out.col_of_row[p[j] - 1] = j - 1;
  for (int i = 0; i < n; ++i) out.cost += cost(i, out.col_of_row[i]);
  return out;
}

double mpjpe(const SkeletonPose& pred, const SkeletonPose& gt, const VisibilityMask& visible) {
  if (pred.joint_count() != gt.joint_count() ||
      visible.size() != static_cast<size_t>(gt.joint_count()))
    throw ShapeMismatch("mpjpe: joint count mismatch");
  double acc = 0.0;
  int n = 0;
  for (int j = 0; j < gt.joint_count(); ++j) {
    if (!visible[j]) continue;
    acc += (pred.positions[j] - gt.positions[j]).norm();
    ++n;
  }
  if (n == 0) throw NoVisibleJoints("mpjpe: no visible joints");
  return acc / n;
}

double matched_mpjpe(const SkeletonPose& pred, const SkeletonPose& gt,
                     const VisibilityMask& visible) {
  if (pred.joint_count() != gt.joint_count() ||
      visible.size() != static_cast<size_t>(gt.joint_count()))
    throw ShapeMismatch("matched_mpjpe: joint count mismatch");
  std::vector<int> vis;
  for (int j = 0; j < gt.joint_count(); ++j)
    if (visible[j]) vis.push_back(j);
  if (vis.empty()) throw NoVisibleJoints("matched_mpjpe: no visible joints");

  const int p = pred.joint_count();
  const int v = static_cast<int>(vis.size());
  // square matrix over all predicted joints; dummy columns cost the same for
  // every row, so they do not disturb the real matching
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < p; ++i)
    for (int k = 0; k < v; ++k)
      cost(i, k) = (pred.positions[i] - gt.positions[vis[k]]).norm();
  const Assignment a = hungarian(cost);
  double acc = 0.0;
  for (int i = 0; i < p; ++i)
    if (a.col_of_row[i] < v) acc += cost(i, a.col_of_row[i]);
  return acc / v;
}

PerturbReport perturb_recovery(const SequenceData& seq, const std::vector<SkeletonPose>& gt,
                               const SkeletonTopology& topo, double sigma,
                               const LossConfig& cfg, const FitOptions& opts,
                               std::uint64_t seed) {
  if (sigma < 0) throw InvalidInput("perturb_recovery: negative sigma");
  if (gt.size() != seq.frames.size())
    throw ShapeMismatch("perturb_recovery: gt pose count != frame count");
  Rng rng(seed);
  std::vector<SkeletonPose> init = gt;
  for (SkeletonPose& pose : init)
    for (Vec3& y : pose.positions)
      y += Vec3(sigma * rng.normal(), sigma * rng.normal(), sigma * rng.normal());

  const VisibilityMask all(topo.joint_count(), 1);
  auto mean_err = [&](const std::vector<SkeletonPose>& poses, bool matched) {
    double acc = 0.0;
    for (size_t f = 0; f < poses.size(); ++f)
      acc += matched ? matched_mpjpe(poses[f], gt[f], all) : mpjpe(poses[f], gt[f], all);
    return acc / poses.size();
  };

  PerturbReport rep;
  rep.initial_mpjpe = mean_err(init, false);
  rep.initial_matched = mean_err(init, true);
  FitTrace trace;
  const std::vector<SkeletonPose> fitted = fit_sequence(seq, init, topo, cfg, opts, &trace);
  rep.final_mpjpe = mean_err(fitted, false);
  rep.final_matched = mean_err(fitted, true);
  rep.loss_trace = trace.loss_history;
  return rep;
}

}  // namespace limbfit
