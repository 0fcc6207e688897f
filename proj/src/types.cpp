#include "limbfit/types.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace limbfit {

void SkeletonTopology::validate() const {
  const int j = joint_count();
  if (j < 1) throw InvalidInput("topology: no joints");
  std::set<std::pair<int, int>> seen;
  for (const Limb& l : limbs) {
    if (l.parent < 0 || l.parent >= j || l.child < 0 || l.child >= j)
      throw InvalidInput("topology: limb index out of range");
    if (l.parent == l.child) throw InvalidInput("topology: degenerate limb indices");
    if (!seen.insert({l.parent, l.child}).second)
      throw InvalidInput("topology: duplicate limb");
  }
}

int PointCloud::valid_count() const {
  if (valid.empty()) return size();
  int n = 0;
  for (std::uint8_t v : valid) n += (v != 0);
  return n;
}

void PointCloud::validate() const {
  const size_t n = points.size();
  if (n < 1) throw InvalidInput("point cloud: empty");
  auto check_len = [&](size_t len, const char* what) {
    if (len != 0 && len != n) throw ShapeMismatch(std::string("point cloud: ") + what + " length mismatch");
  };
  check_len(forward_flow.size(), "forward_flow");
  check_len(backward_flow.size(), "backward_flow");
  check_len(gt_label.size(), "gt_label");
  check_len(attachment.size(), "attachment");
  check_len(valid.size(), "valid");
  for (const Vec3& p : points)
    if (!all_finite(p)) throw InvalidInput("point cloud: non-finite point");
}

void SoftAssignment::validate(double row_sum_tol) const {
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index jj = 0; jj < weights.cols(); ++jj) {
      const double w = weights(i, jj);
      if (!(w >= 0.0)) throw InvalidInput("assignment: negative or NaN weight");
      s += w;
    }
    if (std::abs(s - 1.0) > row_sum_tol)
      throw InvalidInput("assignment: row does not sum to 1");
  }
}

bool SoftAssignment::is_one_hot() const {
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    int ones = 0;
    for (Eigen::Index jj = 0; jj < weights.cols(); ++jj) {
      const double w = weights(i, jj);
      if (w == 1.0)
        ++ones;
      else if (w != 0.0)
        return false;
    }
    if (ones != 1) return false;
  }
  return true;
}

std::vector<int> SoftAssignment::argmax_labels() const {
  std::vector<int> labels(weights.rows());
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    Eigen::Index best = 0;
    weights.row(i).maxCoeff(&best);
    labels[i] = static_cast<int>(best);
  }
  return labels;
}

SoftAssignment one_hot_assignment(const std::vector<int>& labels, int num_classes) {
  SoftAssignment a;
  a.weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw InvalidInput("one_hot_assignment: label out of range");
    a.weights(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return a;
}

}  // namespace limbfit
