#include "limbfit/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "limbfit/eval.hpp"
#include "limbfit/rng.hpp"

namespace limbfit {

namespace {

int nearest_center(const Vec3& p, const std::vector<Vec3>& centers) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t c = 0; c < centers.size(); ++c) {
    const double d = (p - centers[c]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::vector<Vec3> plus_plus_init(const std::vector<Vec3>& points, int k, Rng& rng) {
  const int n = static_cast<int>(points.size());
  std::vector<Vec3> centers;
  centers.push_back(points[rng.index(n)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& c : centers) best = std::min(best, (points[i] - c).squaredNorm());
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      centers.push_back(points[rng.index(n)]);
      continue;
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    int pick = n - 1;
    for (int i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc > target) {
        pick = i;
        break;
      }
    }
    centers.push_back(points[pick]);
  }
  return centers;
}

}  // namespace

ClusterLabeling kmeans(const std::vector<Vec3>& points, int k, std::uint64_t seed,
                       int max_iters) {
  const int n = static_cast<int>(points.size());
  if (k < 1) throw InvalidInput("kmeans: k must be >= 1");
  if (n < k) throw TooFewPoints("kmeans: fewer points than clusters");
  Rng rng(seed);
  ClusterLabeling out;
  out.centers = plus_plus_init(points, k, rng);
  out.labels.assign(n, -1);

  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      const int c = nearest_center(points[i], out.centers);
      if (c != out.labels[i]) {
        changed = true;
        out.labels[i] = c;
      }
      inertia += (points[i] - out.centers[c]).squaredNorm();
    }
    if (inertia > prev + 1e-9)
      throw NumericError("kmeans: inertia increased across an iteration");
    prev = inertia;
    out.inertia_history.push_back(inertia);
    if (!changed && it > 0) break;

    std::vector<Vec3> sums(k, Vec3::Zero());
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums[out.labels[i]] += points[i];
      ++counts[out.labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        out.centers[c] = sums[c] / counts[c];
        continue;
      }
      // reseed an empty cluster at the point farthest from its own center
      int far = 0;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        const double d = (points[i] - out.centers[out.labels[i]]).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      out.centers[c] = points[far];
      out.labels[far] = c;  // keeps a later reseed from picking the same point
    }
  }
  // final assignment against the final centers, then means once more so every
  // nonempty cluster's center is exactly the mean of its members
  for (int i = 0; i < n; ++i) out.labels[i] = nearest_center(points[i], out.centers);
  std::vector<Vec3> sums(k, Vec3::Zero());
  std::vector<int> counts(k, 0);
  for (int i = 0; i < n; ++i) {
    sums[out.labels[i]] += points[i];
    ++counts[out.labels[i]];
  }
  for (int c = 0; c < k; ++c)
    if (counts[c] > 0) out.centers[c] = sums[c] / counts[c];
  out.inertia = 0.0;
  for (int i = 0; i < n; ++i)
    out.inertia += (points[i] - out.centers[out.labels[i]]).squaredNorm();
  out.inertia_history.push_back(out.inertia);
  return out;
}

double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw EmptySet("chamfer_distance: empty point set");
  auto one_way = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double acc = 0.0;
    for (const Vec3& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : to) best = std::min(best, (p - q).norm());
      acc += best;
    }
    return acc / from.size();
  };
  return one_way(a, b) + one_way(b, a);
}

std::vector<int> match_clusters(const ClusterLabeling& lab_t, const std::vector<Vec3>& pts_t,
                                const ClusterLabeling& lab_t1,
                                const std::vector<Vec3>& pts_t1) {
  if (lab_t.k() != lab_t1.k()) throw ShapeMismatch("match_clusters: cluster counts differ");
  const int k = lab_t.k();
  std::vector<std::vector<Vec3>> groups_t(k), groups_t1(k);
  for (size_t i = 0; i < pts_t.size(); ++i) groups_t[lab_t.labels[i]].push_back(pts_t[i]);
  for (size_t i = 0; i < pts_t1.size(); ++i) groups_t1[lab_t1.labels[i]].push_back(pts_t1[i]);
  for (int c = 0; c < k; ++c)
    if (groups_t[c].empty() || groups_t1[c].empty())
      throw EmptyCluster("match_clusters: empty cluster");

  Eigen::MatrixXd cost(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) cost(i, j) = chamfer_distance(groups_t[i], groups_t1[j]);
  return hungarian(cost).col_of_row;
}

std::vector<ClusterLabeling> propagate_labels(const std::vector<std::vector<Vec3>>& frames,
                                              int k, std::uint64_t seed) {
  if (frames.empty()) throw InvalidInput("propagate_labels: empty sequence");
  std::vector<ClusterLabeling> out;
  out.reserve(frames.size());
  for (size_t f = 0; f < frames.size(); ++f) {
    ClusterLabeling lab = kmeans(frames[f], k, mix_seed(seed, f));
    if (f > 0) {
      // out[f-1] cluster i corresponds to raw cluster m[i] of this frame;
      // relabel so indices stay consistent with frame 0
      const std::vector<int> m = match_clusters(out[f - 1], frames[f - 1], lab, frames[f]);
      std::vector<int> inv(k, -1);
      for (int i = 0; i < k; ++i) inv[m[i]] = i;
      for (int& label : lab.labels) label = inv[label];
      std::vector<Vec3> centers(k);
      for (int i = 0; i < k; ++i) centers[i] = lab.centers[m[i]];
      lab.centers = centers;
    }
    out.push_back(std::move(lab));
  }
  return out;
}

SoftAssignment to_one_hot(const std::vector<int>& labels, int num_classes) {
  SoftAssignment w;
  w.weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw LabelOutOfRange("to_one_hot: label outside [0, num_classes)");
    w.weights(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return w;
}

Vec3 median_center(const std::vector<Vec3>& points) {
  if (points.empty()) throw EmptyCloud("median_center: no points");
  Vec3 out;
  std::vector<double> axis(points.size());
  for (int c = 0; c < 3; ++c) {
    for (size_t i = 0; i < points.size(); ++i) axis[i] = points[i][c];
    const size_t mid = axis.size() / 2;
    std::nth_element(axis.begin(), axis.begin() + mid, axis.end());
    out[c] = axis[mid];
  }
  return out;
}

std::vector<char> background_mask(const std::vector<Vec3>& points,
                                  const BackgroundFilterConfig& config) {
  std::vector<char> mask(points.size(), 0);
  if (points.empty()) return mask;
  const Vec3 center = median_center(points);
  for (size_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    if (p.z() < config.ground_z ||
        std::hypot(p.x() - center.x(), p.y() - center.y()) > config.body_radius)
      mask[i] = 1;
  }
  return mask;
}

RigidTransform template_placement(const CapsuleBody& body, const Vec3& cloud_center,
                                  const Vec3& sensor) {
  const Vec3 pelvis = body.rest_positions[body.root];
  const double yaw =
      std::atan2(sensor.y() - cloud_center.y(), sensor.x() - cloud_center.x());
  RigidTransform g;
  g.rotation = euler_deg_to_matrix(Vec3(0.0, 0.0, yaw * 180.0 / M_PI));
  const Vec3 ground_anchor(pelvis.x(), pelvis.y(), 0.0);
  const Vec3 target(cloud_center.x(), cloud_center.y(), 0.0);
  g.translation = target - g.rotation * ground_anchor;
  return g;
}

std::vector<int> map_clusters_to_classes(const std::vector<Vec3>& centers,
                                         const Vec3& cloud_center, const CapsuleBody& body,
                                         const Vec3& sensor) {
  body.validate();
  const int joints = body.topology.joint_count();
  // class references in the body frame: the owning limb's midpoint, or the
  // joint itself for classes that own no limb (the root)
  std::vector<Vec3> refs(joints, Vec3::Zero());
  std::vector<char> owned(joints, 0);
  for (int l = 0; l < body.topology.limb_count(); ++l) {
    const Limb& limb = body.topology.limbs[l];
    refs[body.topology.limb_class(l)] =
        0.5 * (body.rest_positions[limb.parent] + body.rest_positions[limb.child]);
    owned[body.topology.limb_class(l)] = 1;
  }
  for (int j = 0; j < joints; ++j)
    if (!owned[j]) refs[j] = body.rest_positions[j];

  const RigidTransform g = template_placement(body, cloud_center, sensor);
  for (Vec3& r : refs) r = g.apply(r);

  const int k = static_cast<int>(centers.size());
  const int m = std::max(k, joints);
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(m, m);
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < joints; ++j) cost(c, j) = (centers[c] - refs[j]).norm();
  const Assignment a = hungarian(cost);
  std::vector<int> out(k);
  for (int c = 0; c < k; ++c)
    out[c] = a.col_of_row[c] < joints ? a.col_of_row[c] : body.topology.background_class();
  return out;
}

std::vector<SoftAssignment> segment_sequence(const std::vector<const PointCloud*>& clouds,
                                             int k, std::uint64_t seed,
                                             const CapsuleBody& template_body,
                                             const Vec3& sensor,
                                             const BackgroundFilterConfig& config) {
  if (clouds.empty()) throw InvalidInput("segment_sequence: empty sequence");
  const int num_classes = template_body.topology.num_classes();
  const int background = template_body.topology.background_class();

  std::vector<std::vector<Vec3>> fg(clouds.size());
  std::vector<std::vector<int>> fg_idx(clouds.size());
  std::vector<std::vector<char>> masks(clouds.size());
  for (size_t f = 0; f < clouds.size(); ++f) {
    masks[f] = background_mask(clouds[f]->points, config);
    for (int i = 0; i < clouds[f]->size(); ++i) {
      if (masks[f][i] || !clouds[f]->is_valid(i)) continue;
      fg[f].push_back(clouds[f]->points[i]);
      fg_idx[f].push_back(i);
    }
    if (static_cast<int>(fg[f].size()) < k)
      throw TooFewPoints("segment_sequence: too few foreground points to cluster");
  }

  const std::vector<ClusterLabeling> labs = propagate_labels(fg, k, seed);
  const std::vector<int> cls =
      map_clusters_to_classes(labs[0].centers, median_center(fg[0]), template_body, sensor);

  std::vector<SoftAssignment> out(clouds.size());
  for (size_t f = 0; f < clouds.size(); ++f) {
    std::vector<int> labels(clouds[f]->size(), background);
    for (size_t j = 0; j < fg_idx[f].size(); ++j)
      labels[fg_idx[f][j]] = cls[labs[f].labels[j]];
    out[f] = to_one_hot(labels, num_classes);
  }
  return out;
}

}  // namespace limbfit
