#include "limbfit/flow.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <limits>

#include "limbfit/synth.hpp"

namespace limbfit {

FlowField gt_flow_provider(const PointCloud& cloud_t, const PointCloud& cloud_t1,
                           const std::vector<RigidTransform>& transforms_t,
                           const std::vector<RigidTransform>& transforms_t1) {
  FlowField f;
  f.forward = exact_flow(cloud_t, transforms_t, transforms_t1);
  f.backward = exact_flow(cloud_t1, transforms_t1, transforms_t);
  return f;
}

namespace {

Vec3 nearest_point(const Vec3& p, const std::vector<Vec3>& pts) {
  double best = std::numeric_limits<double>::infinity();
  Vec3 out = Vec3::Zero();
  for (const Vec3& q : pts) {
    const double d = (p - q).squaredNorm();
    if (d < best) {
      best = d;
      out = q;
    }
  }
  return out;
}

}  // namespace

FlowField nn_flow(const PointCloud& cloud_t, const PointCloud& cloud_t1) {
  if (cloud_t.size() == 0 || cloud_t1.size() == 0) throw EmptyCloud("nn_flow: empty frame");
  FlowField f;
  f.forward.reserve(cloud_t.size());
  for (const Vec3& p : cloud_t.points)
    f.forward.push_back(nearest_point(p, cloud_t1.points) - p);
  f.backward.reserve(cloud_t1.size());
  for (const Vec3& p : cloud_t1.points)
    f.backward.push_back(nearest_point(p, cloud_t.points) - p);
  return f;
}

RigidTransform kabsch(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.size() != b.size() || a.empty()) throw ShapeMismatch("kabsch: pair count mismatch");
  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  for (const Vec3& p : a) ca += p;
  for (const Vec3& p : b) cb += p;
  ca /= static_cast<double>(a.size());
  cb /= static_cast<double>(b.size());

  Mat3 h = Mat3::Zero();
  for (size_t i = 0; i < a.size(); ++i) h += (a[i] - ca) * (b[i] - cb).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform out;
  out.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  out.translation = cb - out.rotation * ca;
  return out;
}

namespace {

// flow for the `from` side of one class: rigid fit of from -> to with the
// nearest-neighbor pairing refreshed under the running transform until it
// stabilizes, translation-only below 3 points
void class_flow(const std::vector<Vec3>& from, const std::vector<Vec3>& to,
                const std::vector<int>& from_idx, std::vector<Vec3>& field) {
  if (from.empty() || to.empty()) return;  // zero flow stays
  Vec3 cf = Vec3::Zero(), ct = Vec3::Zero();
  for (const Vec3& p : from) cf += p;
  for (const Vec3& p : to) ct += p;
  cf /= static_cast<double>(from.size());
  ct /= static_cast<double>(to.size());
  if (from.size() < 3 || to.size() < 3) {
    for (const int i : from_idx) field[i] = ct - cf;
    return;
  }
  // centroid alignment seeds the pairing so the match is by shape, not by
  // absolute position; each round re-pairs under the running transform and
  // refits until the pairing stops changing
  RigidTransform t;
  t.translation = ct - cf;
  std::vector<Vec3> matched(from.size(), Vec3::Zero());
  for (int round = 0; round < 20; ++round) {
    bool changed = round == 0;
    for (size_t k = 0; k < from.size(); ++k) {
      const Vec3 m = nearest_point(t.apply(from[k]), to);
      if ((m - matched[k]).squaredNorm() != 0.0) {
        matched[k] = m;
        changed = true;
      }
    }
    if (!changed) break;
    t = kabsch(from, matched);
  }
  for (size_t k = 0; k < from.size(); ++k) field[from_idx[k]] = t.apply(from[k]) - from[k];
}

}  // namespace

FlowField rigid_part_flow(const PointCloud& cloud_t, const std::vector<int>& labels_t,
                          const PointCloud& cloud_t1, const std::vector<int>& labels_t1) {
  if (labels_t.size() != static_cast<size_t>(cloud_t.size()) ||
      labels_t1.size() != static_cast<size_t>(cloud_t1.size()))
    throw ShapeMismatch("rigid_part_flow: label count mismatch");
  int max_class = -1;
  for (const int l : labels_t) max_class = std::max(max_class, l);
  for (const int l : labels_t1) max_class = std::max(max_class, l);

  FlowField f;
  f.forward.assign(cloud_t.size(), Vec3::Zero());
  f.backward.assign(cloud_t1.size(), Vec3::Zero());
  for (int c = 0; c <= max_class; ++c) {
    std::vector<Vec3> pts_t, pts_t1;
    std::vector<int> idx_t, idx_t1;
    for (int i = 0; i < cloud_t.size(); ++i)
      if (labels_t[i] == c) {
        pts_t.push_back(cloud_t.points[i]);
        idx_t.push_back(i);
      }
    for (int i = 0; i < cloud_t1.size(); ++i)
      if (labels_t1[i] == c) {
        pts_t1.push_back(cloud_t1.points[i]);
        idx_t1.push_back(i);
      }
    class_flow(pts_t, pts_t1, idx_t, f.forward);
    class_flow(pts_t1, pts_t, idx_t1, f.backward);
  }
  return f;
}

}  // namespace limbfit
