#pragma once

#include "limbfit/geometry.hpp"
#include "limbfit/rng.hpp"
#include "limbfit/types.hpp"

namespace limbfit {

// Per-joint rotation parameters in degrees, applied intrinsically (Z-Y-X)
// about the joint's parent end. The root entry is the global orientation.
struct PoseAngles {
  std::vector<Vec3> angles_deg;

  int joint_count() const { return static_cast<int>(angles_deg.size()); }
};

// Capsule-limb body: a skeleton whose limbs carry cylinder-with-caps surface
// primitives. Limb lengths are implied by the rest positions.
struct CapsuleBody {
  SkeletonTopology topology;
  std::vector<Vec3> rest_positions;     // per joint, canonical standing pose
  std::vector<double> capsule_radii;    // per limb, meters
  std::vector<double> joint_noise_deg;  // per joint, end-pose sampling bound
  double scale = 1.0;

  int root = 0;
  std::vector<int> parent;  // per joint, -1 at root

  void validate() const;
  double limb_length(int l) const;
  PoseAngles rest_angles() const { return PoseAngles{std::vector<Vec3>(
      static_cast<size_t>(topology.joint_count()), Vec3::Zero())}; }
};

// The 13-joint default pedestrian. Joint order: pelvis, neck, head,
// l_shoulder, l_elbow, l_wrist, r_shoulder, r_elbow, r_wrist, l_knee,
// l_ankle, r_knee, r_ankle. One limb per non-root joint (12 total).
CapsuleBody default_body();

// Independent per-limb length and radius jitter, multiplicative in
// [1-frac, 1+frac]. Lengths are jittered by scaling each joint's rest offset
// from its parent.
CapsuleBody jitter_body(const CapsuleBody& body, Rng& rng, double frac = 0.1);

// End pose of a sequence: uniform noise within +/- joint_noise_deg added to
// the rest angles, per joint and axis. The root stays unperturbed so the
// body keeps its facing.
PoseAngles sample_end_pose(const CapsuleBody& body, std::uint64_t seed);
PoseAngles sample_end_pose(const CapsuleBody& body, Rng& rng);

// Per-angle linear interpolation; frame 0 = start, frame frames-1 = end.
std::vector<PoseAngles> interpolate_sequence(const PoseAngles& start, const PoseAngles& end,
                                             int frames);

struct PosedBody {
  SkeletonPose pose;
  std::vector<RigidTransform> limb_transforms;  // rest frame -> world, per limb
};

// Joint positions and per-limb rigid transforms from hierarchy traversal.
// A limb's transform maps its rest-frame capsule onto the posed capsule:
// both endpoints land on the posed joints.
PosedBody forward_kinematics(const CapsuleBody& body, const PoseAngles& angles);

// Applies a world placement on top of a posed body.
PosedBody place(const PosedBody& posed, const RigidTransform& g);

struct RayCasterConfig {
  int azimuth_steps = 2650;  // full 360 degree coverage
  int beams = 64;
  double elev_min_deg = -15.0;
  double elev_max_deg = 3.0;
  Vec3 origin = Vec3(0.0, 0.0, 2.0);
  double max_range = 120.0;

  void validate() const;
};

// Casts the beam grid against the posed capsules and keeps the nearest hit
// per ray. Points carry gt_label (the hit limb's class, i.e. its child joint
// index) and the hit position in the limb's rest frame. Throws EmptyCloud
// when nothing is hit.
PointCloud raycast(const CapsuleBody& body, const PosedBody& posed,
                   const RayCasterConfig& config);

// Displacement of each attached point under the change of limb transforms:
// f_i = to[limb_i](local_i) - from[limb_i](local_i). Throws MissingAttachment.
std::vector<Vec3> exact_flow(const PointCloud& cloud,
                             const std::vector<RigidTransform>& from,
                             const std::vector<RigidTransform>& to);

struct AugmentationConfig {
  bool enabled = true;
  double downsample_keep = 0.9;    // keep fraction, 1 disables
  double mask_prob = 0.5;          // chance of removing one azimuth sector
  double mask_width_deg = 20.0;
  int ground_clusters = 2;
  int ground_cluster_points = 30;
  double ground_cluster_sigma = 0.15;
  int background_clusters = 2;
  int background_cluster_points = 40;
  double background_cluster_sigma = 0.3;
  double second_person_prob = 0.3;
  double noise_sigma = 0.01;       // per-point Gaussian, meters
  double scale_min = 0.8;          // person scale range
  double scale_max = 1.2;

  void validate() const;
};

struct FrameRecord {
  PointCloud cloud;
  SkeletonPose gt_pose;
  std::vector<std::uint8_t> visibility;  // per joint
};

struct SequenceConfig {
  int frames = 16;
  double min_distance = 6.0;
  double max_distance = 17.0;
  double body_jitter = 0.1;
  RayCasterConfig raycaster;

  void validate() const;
};

struct SequenceRecord {
  std::vector<FrameRecord> frames;
  CapsuleBody body;  // jittered body actually used
};

// One synthetic pedestrian sequence: jittered body, rest-to-random pose
// interpolation, placement 6-17 m from the sensor facing it, raycast per
// frame, exact forward/backward flow between consecutive frames, and
// per-joint visibility (>= 3 rays on limbs adjacent to the joint).
SequenceRecord generate_sequence(const CapsuleBody& base, const SequenceConfig& config,
                                 std::uint64_t seed);

// Applies one augmentation parameter draw to every frame of the sequence:
// person scaling (keypoints, points, and flows together), an optional second
// person (a displaced static copy of the first frame's body points), ground
// and background clusters, sector masking, downsampling, and per-point noise.
// Injected points carry the background label and zero flow.
void augment_sequence(SequenceRecord& seq, const AugmentationConfig& config,
                      std::uint64_t seed);

// Two-frame form: same parameter draw applied to both frames of a sample.
void augment(FrameRecord& a, FrameRecord& b, const AugmentationConfig& config,
             std::uint64_t seed);

}  // namespace limbfit
