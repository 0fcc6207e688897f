#pragma once

#include "limbfit/geometry.hpp"
#include "limbfit/types.hpp"

namespace limbfit {

struct LossConfig {
  double lambda_flow = 0.02;
  double lambda_p2l = 0.01;
  double lambda_sym = 0.5;
  double lambda_j2p = 2.0;
  double lambda_seg = 0.5;
  double lambda_kp = 0.5;
  double bandwidth = 0.1;  // kernel bandwidth h, meters
  double eps_len = 1e-9;
  double eps_denom = 1e-12;
  double eps_prob = 1e-12;

  void validate() const;

  // Stage II weights: flow 0.02, p2l 0.01, sym 0.5, j2p 2, seg 0.5, h 0.1
  static LossConfig stage2_defaults();
  // Stage I warmup weights: kp 0.5, seg 1
  static LossConfig stage1_defaults();
  // Direct keypoint fitting demo: flow 0.2, p2l 0.1, sym 5, no j2p/seg
  static LossConfig supp_demo();
};

// View over two consecutive frames. cloud_t must carry forward flow and
// cloud_t1 backward flow for the flow loss.
struct FramePair {
  const PointCloud& cloud_t;
  const PointCloud& cloud_t1;
  const SoftAssignment& w_t;
  const SoftAssignment& w_t1;
  const SkeletonPose& pose_t;
  const SkeletonPose& pose_t1;
};

struct FrameData {
  PointCloud cloud;
  SoftAssignment assignment;
};

struct SequenceData {
  std::vector<FrameData> frames;
};

// Precomputed per-(cloud, assignment) data reused across limbs and loss
// evaluations: valid indices, one-hot detection, and for genuinely soft
// assignments the pairwise part-similarity matrix W_i* . W_j* over the J part
// columns (background excluded).
struct AssignmentContext {
  std::vector<int> valid_idx;
  bool one_hot = false;
  std::vector<int> labels;     // argmax labels over valid points (one-hot only)
  Eigen::MatrixXd part_sim;    // n_valid x n_valid (soft only)

  int n_valid() const { return static_cast<int>(valid_idx.size()); }
  static AssignmentContext build(const PointCloud& cloud, const SoftAssignment& w);
};

// Flow loss over a frame pair: per limb, mean of forward and backward terms;
// each term is the weighted mean absolute change of (r, z) under the flow.
// Frames with zero valid points contribute 0.
double flow_loss(const FramePair& pair, const SkeletonTopology& topo, const LossConfig& cfg);

// Points-to-limb: weighted mean segment distance, averaged over limbs.
double p2l_loss(const PointCloud& cloud, const SoftAssignment& w, const SkeletonPose& pose,
                const SkeletonTopology& topo, const LossConfig& cfg);

// Symmetry: weighted variance of radii around the kernel-weighted radial mean
// rbar_i = sum_j K_h(z_i,z_j) (W_i*.W_j*) r_j / sum_j K_h(z_i,z_j) (W_i*.W_j*).
// Points whose denominator falls below eps_denom are skipped.
double sym_loss(const PointCloud& cloud, const SoftAssignment& w, const SkeletonPose& pose,
                const SkeletonTopology& topo, double h, const LossConfig& cfg);

// Overload reusing a prebuilt context (part-similarity is quadratic to build).
double sym_loss(const PointCloud& cloud, const SoftAssignment& w, const AssignmentContext& ctx,
                const SkeletonPose& pose, const SkeletonTopology& topo, double h,
                const LossConfig& cfg);

// Joint-to-part: mean distance of each joint to its part's weighted centroid.
// Joints whose part weight total is <= eps_denom contribute 0; their indices
// are appended to empty_parts when provided.
double j2p_loss(const PointCloud& cloud, const SoftAssignment& w, const SkeletonPose& pose,
                const LossConfig& cfg, std::vector<int>* empty_parts = nullptr);

// Cross entropy -sum_ij gt[i,j] log(max(pred[i,j], eps_prob)).
double seg_cross_entropy(const SoftAssignment& pred, const SoftAssignment& gt, double eps_prob);

// Mean per-joint Euclidean distance between two poses.
double kp_l2(const SkeletonPose& pred, const SkeletonPose& gt);

// lambda_kp * kp_l2 + lambda_seg * seg_cross_entropy
double stage1_objective(const SkeletonPose& pred_pose, const SkeletonPose& gt_pose,
                        const SoftAssignment& pred_w, const SoftAssignment& gt_w,
                        const LossConfig& cfg);

struct LossBreakdown {
  double flow = 0.0;
  double p2l = 0.0;
  double sym = 0.0;
  double j2p = 0.0;
  double seg = 0.0;

  double weighted_total(const LossConfig& cfg) const {
    return cfg.lambda_flow * flow + cfg.lambda_p2l * p2l + cfg.lambda_sym * sym +
           cfg.lambda_j2p * j2p + cfg.lambda_seg * seg;
  }
};

// Stage II objective over a whole sequence: flow averaged over consecutive
// pairs, per-frame terms averaged over frames. The segmentation term uses the
// one-hot encoding of each frame's argmax labels as surrogate ground truth;
// it is constant in the poses.
LossBreakdown stage2_terms(const SequenceData& seq, const std::vector<SkeletonPose>& poses,
                           const SkeletonTopology& topo, const LossConfig& cfg);
double stage2_objective(const SequenceData& seq, const std::vector<SkeletonPose>& poses,
                        const SkeletonTopology& topo, const LossConfig& cfg);

namespace detail {

// Per-limb pieces shared by sym_loss and its analytic gradient.
struct SymLimbTerms {
  std::vector<int> idx;     // cloud indices of the points participating
  Eigen::VectorXd z, r;     // cylindrical coordinates per participating point
  Eigen::VectorXd outer_w;  // W_{i,a}
  Eigen::MatrixXd m;        // kernel * part-similarity
  Eigen::VectorXd den;
  Eigen::VectorXd rbar;     // den <= eps rows carry rbar = r (term skipped)
  std::vector<bool> skipped;
  double loss = 0.0;        // (1/N) sum_i w_i (r_i - rbar_i)^2, N = valid count
};

SymLimbTerms sym_limb_terms(const PointCloud& cloud, const SoftAssignment& w,
                            const AssignmentContext& ctx, const Vec3& ya, const Vec3& yb,
                            int limb_cls, double h, const LossConfig& cfg);

double flow_side_loss(const PointCloud& cloud, const SoftAssignment& w, int limb_cls,
                      bool forward, const Vec3& ya_from, const Vec3& yb_from,
                      const Vec3& ya_to, const Vec3& yb_to, const LossConfig& cfg);

}  // namespace detail

}  // namespace limbfit
