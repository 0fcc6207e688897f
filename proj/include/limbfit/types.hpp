#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace limbfit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Error taxonomy. Validation problems (bad shapes, bad configs, degenerate
// inputs) are InvalidInput; numeric breakdowns during optimization are
// NumericError. The CLI maps them to exit codes 1 and 2.
class InvalidInput : public std::runtime_error {
 public:
  explicit InvalidInput(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateLimb : InvalidInput {
  explicit DegenerateLimb(const std::string& msg) : InvalidInput(msg) {}
};
struct MissingFlow : InvalidInput {
  explicit MissingFlow(const std::string& msg) : InvalidInput(msg) {}
};
struct MissingAttachment : InvalidInput {
  explicit MissingAttachment(const std::string& msg) : InvalidInput(msg) {}
};
struct ShapeMismatch : InvalidInput {
  explicit ShapeMismatch(const std::string& msg) : InvalidInput(msg) {}
};
struct InvalidBandwidth : InvalidInput {
  explicit InvalidBandwidth(const std::string& msg) : InvalidInput(msg) {}
};
struct EmptyCloud : InvalidInput {
  explicit EmptyCloud(const std::string& msg) : InvalidInput(msg) {}
};
struct NonFiniteLoss : NumericError {
  explicit NonFiniteLoss(const std::string& msg) : NumericError(msg) {}
};
struct TooFewPoints : InvalidInput {
  explicit TooFewPoints(const std::string& msg) : InvalidInput(msg) {}
};
struct EmptySet : InvalidInput {
  explicit EmptySet(const std::string& msg) : InvalidInput(msg) {}
};
struct EmptyCluster : InvalidInput {
  explicit EmptyCluster(const std::string& msg) : InvalidInput(msg) {}
};
struct LabelOutOfRange : InvalidInput {
  explicit LabelOutOfRange(const std::string& msg) : InvalidInput(msg) {}
};
struct NonSquare : InvalidInput {
  explicit NonSquare(const std::string& msg) : InvalidInput(msg) {}
};
struct NoVisibleJoints : InvalidInput {
  explicit NoVisibleJoints(const std::string& msg) : InvalidInput(msg) {}
};
struct FrameCountMismatch : InvalidInput {
  explicit FrameCountMismatch(const std::string& msg) : InvalidInput(msg) {}
};
struct IoError : InvalidInput {
  explicit IoError(const std::string& msg) : InvalidInput(msg) {}
};
struct InvalidConfig : InvalidInput {
  explicit InvalidConfig(const std::string& msg) : InvalidInput(msg) {}
};

struct Limb {
  int parent = -1;
  int child = -1;
  bool operator==(const Limb&) const = default;
};

// Keypoint set plus the limb segments connecting them. Segmentation classes
// follow the convention: a limb's surface points carry the limb's child joint
// index as their class, class J is background. Child keying makes the class a
// unique limb id (every non-root joint has exactly one limb above it), so a
// one-hot labeled point enters exactly the limb it rides on. Keying by parent
// would merge sibling limbs at branch joints (pelvis, neck) and points on one
// sibling would leak into the others' flow and symmetry terms.
struct SkeletonTopology {
  std::vector<std::string> joint_names;
  std::vector<Limb> limbs;

  int joint_count() const { return static_cast<int>(joint_names.size()); }
  int limb_count() const { return static_cast<int>(limbs.size()); }
  int background_class() const { return joint_count(); }
  int num_classes() const { return joint_count() + 1; }
  // segmentation class owned by limb l
  int limb_class(int l) const { return limbs[l].child; }

  void validate() const;
};

struct SkeletonPose {
  std::vector<Vec3> positions;

  int joint_count() const { return static_cast<int>(positions.size()); }
};

// Where a synthetic point lives on the body: limb index plus rest-frame
// local coordinates. limb < 0 marks an unattached (injected) point.
struct LimbAttachment {
  int limb = -1;
  Vec3 local = Vec3::Zero();
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> forward_flow;        // empty or size N
  std::vector<Vec3> backward_flow;       // empty or size N
  std::vector<int> gt_label;             // empty or size N, values in [0, J]
  std::vector<LimbAttachment> attachment;  // empty or size N
  std::vector<std::uint8_t> valid;       // empty (= all valid) or size N

  int size() const { return static_cast<int>(points.size()); }
  bool has_forward_flow() const { return !forward_flow.empty(); }
  bool has_backward_flow() const { return !backward_flow.empty(); }
  bool has_labels() const { return !gt_label.empty(); }
  bool has_attachment() const { return !attachment.empty(); }
  bool is_valid(int i) const { return valid.empty() || valid[i] != 0; }
  int valid_count() const;

  void validate() const;
};

// Row-stochastic N x (J+1) part membership. Column J is background.
struct SoftAssignment {
  Eigen::MatrixXd weights;

  int size() const { return static_cast<int>(weights.rows()); }
  int num_classes() const { return static_cast<int>(weights.cols()); }

  void validate(double row_sum_tol = 1e-6) const;
  bool is_one_hot() const;
  // argmax per row; rows must be one-hot for exact semantics
  std::vector<int> argmax_labels() const;
};

SoftAssignment one_hot_assignment(const std::vector<int>& labels, int num_classes);

inline bool all_finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

}  // namespace limbfit
