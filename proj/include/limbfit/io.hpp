#pragma once

#include <string>

#include "limbfit/synth.hpp"
#include "limbfit/types.hpp"

namespace limbfit {

// All writers use decimal with 9 significant digits; reruns with identical
// inputs produce byte-identical files.
std::string format_g9(double v);

// ASCII PLY with double vertex properties x y z, plus whichever optional
// blocks the cloud carries: flow_{x,y,z}, bflow_{x,y,z}, seg_label (int),
// limb_id (int) with local_{x,y,z}.
void write_ply(const std::string& path, const PointCloud& cloud,
               const std::string& comment = "");
PointCloud read_ply(const std::string& path);

// One line per joint: "name x y z visible".
void write_pose(const std::string& path, const SkeletonTopology& topo,
                const SkeletonPose& pose, const std::vector<std::uint8_t>& visible);
struct PoseFile {
  std::vector<std::string> joint_names;
  SkeletonPose pose;
  std::vector<std::uint8_t> visible;
};
PoseFile read_pose(const std::string& path);

// Key-value body description; round-trips default_body().
void write_body_config(const std::string& path, const CapsuleBody& body);
CapsuleBody read_body_config(const std::string& path);

void write_augment_config(const std::string& path, const AugmentationConfig& config);
AugmentationConfig read_augment_config(const std::string& path);

struct DatasetManifest {
  int schema_version = 1;
  std::uint64_t seed = 0;
  int sequences = 0;
  int frames = 0;
  Vec3 sensor = Vec3(0.0, 0.0, 2.0);
  std::string body_config;     // relative path, or "builtin"
  std::string augment_config;  // relative path, or "none"
  std::vector<std::string> sequence_dirs;
};

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

// Dataset directory layout helpers.
std::string sequence_dir_name(int index);
std::string frame_file_name(int frame);
std::string gt_pose_file_name(int frame);
std::string fit_pose_file_name(int frame);

// Reads one generated sequence back from a dataset directory. The body comes
// from the dataset's body config (or the built-in default).
struct LoadedSequence {
  std::vector<PointCloud> clouds;
  std::vector<SkeletonPose> gt_poses;
  std::vector<std::vector<std::uint8_t>> visibility;
};
LoadedSequence read_sequence(const std::string& dataset_dir, const DatasetManifest& manifest,
                             int index);

}  // namespace limbfit
