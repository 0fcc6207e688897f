#include "limbfit/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace limbfit {

std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return in;
}

void put_vec3(std::ostream& out, const Vec3& v) {
  out << format_g9(v.x()) << ' ' << format_g9(v.y()) << ' ' << format_g9(v.z());
}

}  // namespace

void write_ply(const std::string& path, const PointCloud& cloud, const std::string& comment) {
  cloud.validate();
  std::ofstream out = open_out(path);
  out << "ply\nformat ascii 1.0\n";
  if (!comment.empty()) out << "comment " << comment << "\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (cloud.has_forward_flow())
    out << "property double flow_x\nproperty double flow_y\nproperty double flow_z\n";
  if (cloud.has_backward_flow())
    out << "property double bflow_x\nproperty double bflow_y\nproperty double bflow_z\n";
  if (cloud.has_labels()) out << "property int seg_label\n";
  if (cloud.has_attachment())
    out << "property int limb_id\nproperty double local_x\nproperty double local_y\n"
           "property double local_z\n";
  out << "end_header\n";
  for (int i = 0; i < cloud.size(); ++i) {
    put_vec3(out, cloud.points[i]);
    if (cloud.has_forward_flow()) {
      out << ' ';
      put_vec3(out, cloud.forward_flow[i]);
    }
    if (cloud.has_backward_flow()) {
      out << ' ';
      put_vec3(out, cloud.backward_flow[i]);
    }
    if (cloud.has_labels()) out << ' ' << cloud.gt_label[i];
    if (cloud.has_attachment()) {
      out << ' ' << cloud.attachment[i].limb << ' ';
      put_vec3(out, cloud.attachment[i].local);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

PointCloud read_ply(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw IoError(path + ": not a ply file");
  int n = -1;
  std::vector<std::string> props;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw IoError(path + ": only ascii ply supported");
    } else if (tok == "element") {
      std::string name;
      ls >> name >> n;
      in_vertex = name == "vertex";
      if (!in_vertex) throw IoError(path + ": unsupported element " + name);
    } else if (tok == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    }
  }
  if (n < 0) throw IoError(path + ": missing vertex element");

  std::map<std::string, int> col;
  for (size_t c = 0; c < props.size(); ++c) col[props[c]] = static_cast<int>(c);
  auto has3 = [&](const char* x, const char* y, const char* z) {
    return col.count(x) && col.count(y) && col.count(z);
  };
  if (!has3("x", "y", "z")) throw IoError(path + ": missing x y z properties");
  const bool flow = has3("flow_x", "flow_y", "flow_z");
  const bool bflow = has3("bflow_x", "bflow_y", "bflow_z");
  const bool labels = col.count("seg_label") != 0;
  const bool attach = col.count("limb_id") && has3("local_x", "local_y", "local_z");

  PointCloud cloud;
  cloud.points.reserve(n);
  std::vector<double> row(props.size());
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw IoError(path + ": truncated vertex data");
    std::istringstream ls(line);
    for (double& v : row)
      if (!(ls >> v)) throw IoError(path + ": short vertex row");
    cloud.points.emplace_back(row[col["x"]], row[col["y"]], row[col["z"]]);
    if (flow)
      cloud.forward_flow.emplace_back(row[col["flow_x"]], row[col["flow_y"]],
                                      row[col["flow_z"]]);
    if (bflow)
      cloud.backward_flow.emplace_back(row[col["bflow_x"]], row[col["bflow_y"]],
                                       row[col["bflow_z"]]);
    if (labels) cloud.gt_label.push_back(static_cast<int>(row[col["seg_label"]]));
    if (attach)
      cloud.attachment.push_back(
          LimbAttachment{static_cast<int>(row[col["limb_id"]]),
                         Vec3(row[col["local_x"]], row[col["local_y"]], row[col["local_z"]])});
  }
  cloud.validate();
  return cloud;
}

void write_pose(const std::string& path, const SkeletonTopology& topo,
                const SkeletonPose& pose, const std::vector<std::uint8_t>& visible) {
  if (pose.joint_count() != topo.joint_count() ||
      visible.size() != static_cast<size_t>(topo.joint_count()))
    throw ShapeMismatch("write_pose: joint count mismatch");
  std::ofstream out = open_out(path);
  for (int j = 0; j < topo.joint_count(); ++j) {
    out << topo.joint_names[j] << ' ';
    put_vec3(out, pose.positions[j]);
    out << ' ' << (visible[j] ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

PoseFile read_pose(const std::string& path) {
  std::ifstream in = open_in(path);
  PoseFile pf;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    double x, y, z;
    int vis;
    if (!(ls >> name >> x >> y >> z >> vis)) throw IoError(path + ": bad pose line");
    pf.joint_names.push_back(name);
    pf.pose.positions.emplace_back(x, y, z);
    pf.visible.push_back(vis ? 1 : 0);
  }
  if (pf.pose.positions.empty()) throw IoError(path + ": empty pose file");
  return pf;
}

void write_body_config(const std::string& path, const CapsuleBody& body) {
  body.validate();
  std::ofstream out = open_out(path);
  out << "# capsule body: root line then one joint line per limb\n";
  out << "# joint <name> <parent> <dx> <dy> <dz> <radius> <noise_deg>\n";
  const Vec3& r = body.rest_positions[body.root];
  out << "root " << body.topology.joint_names[body.root] << ' ';
  put_vec3(out, r);
  out << '\n';
  for (int j = 0; j < body.topology.joint_count(); ++j) {
    if (j == body.root) continue;
    const int p = body.parent[j];
    out << "joint " << body.topology.joint_names[j] << ' ' << body.topology.joint_names[p]
        << ' ';
    put_vec3(out, body.rest_positions[j] - body.rest_positions[p]);
    out << ' ' << format_g9(body.capsule_radii[j - 1]) << ' '
        << format_g9(body.joint_noise_deg[j]) << '\n';
  }
  out << "scale " << format_g9(body.scale) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

CapsuleBody read_body_config(const std::string& path) {
  std::ifstream in = open_in(path);
  CapsuleBody body;
  body.scale = 1.0;
  std::map<std::string, int> index;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "root") {
      if (!body.topology.joint_names.empty()) throw InvalidConfig(path + ": root must be first");
      std::string name;
      double x, y, z;
      if (!(ls >> name >> x >> y >> z)) throw InvalidConfig(path + ": bad root line");
      index[name] = 0;
      body.topology.joint_names.push_back(name);
      body.rest_positions.emplace_back(x, y, z);
      body.joint_noise_deg.push_back(0.0);
      body.parent.push_back(-1);
    } else if (tok == "joint") {
      std::string name, parent;
      double dx, dy, dz, radius, noise;
      if (!(ls >> name >> parent >> dx >> dy >> dz >> radius >> noise))
        throw InvalidConfig(path + ": bad joint line");
      if (!index.count(parent)) throw InvalidConfig(path + ": unknown parent " + parent);
      if (index.count(name)) throw InvalidConfig(path + ": duplicate joint " + name);
      const int p = index[parent];
      const int j = static_cast<int>(body.topology.joint_names.size());
      index[name] = j;
      body.topology.joint_names.push_back(name);
      body.rest_positions.push_back(body.rest_positions[p] + Vec3(dx, dy, dz));
      body.joint_noise_deg.push_back(noise);
      body.parent.push_back(p);
      body.topology.limbs.push_back(Limb{p, j});
      body.capsule_radii.push_back(radius);
    } else if (tok == "scale") {
      if (!(ls >> body.scale)) throw InvalidConfig(path + ": bad scale line");
    } else {
      throw InvalidConfig(path + ": unknown directive " + tok);
    }
  }
  if (body.topology.joint_names.empty()) throw InvalidConfig(path + ": no joints");
  body.validate();
  return body;
}

namespace {

std::map<std::string, std::string> read_keyvals(const std::string& path,
                                                std::vector<std::string>* sequences) {
  std::ifstream in = open_in(path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "sequence" && sequences) {
      int idx;
      std::string dir;
      if (!(ls >> idx >> dir)) throw IoError(path + ": bad sequence line");
      if (idx != static_cast<int>(sequences->size()))
        throw IoError(path + ": sequence lines out of order");
      sequences->push_back(dir);
      continue;
    }
    std::string value;
    std::getline(ls, value);
    const size_t start = value.find_first_not_of(' ');
    kv[key] = start == std::string::npos ? "" : value.substr(start);
  }
  return kv;
}

double want_num(const std::map<std::string, std::string>& kv, const std::string& key,
                const std::string& path) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw InvalidConfig(path + ": missing key " + key);
  return std::stod(it->second);
}

}  // namespace

void write_augment_config(const std::string& path, const AugmentationConfig& c) {
  c.validate();
  std::ofstream out = open_out(path);
  out << "enabled " << (c.enabled ? 1 : 0) << '\n'
      << "downsample_keep " << format_g9(c.downsample_keep) << '\n'
      << "mask_prob " << format_g9(c.mask_prob) << '\n'
      << "mask_width_deg " << format_g9(c.mask_width_deg) << '\n'
      << "ground_clusters " << c.ground_clusters << '\n'
      << "ground_cluster_points " << c.ground_cluster_points << '\n'
      << "ground_cluster_sigma " << format_g9(c.ground_cluster_sigma) << '\n'
      << "background_clusters " << c.background_clusters << '\n'
      << "background_cluster_points " << c.background_cluster_points << '\n'
      << "background_cluster_sigma " << format_g9(c.background_cluster_sigma) << '\n'
      << "second_person_prob " << format_g9(c.second_person_prob) << '\n'
      << "noise_sigma " << format_g9(c.noise_sigma) << '\n'
      << "scale_min " << format_g9(c.scale_min) << '\n'
      << "scale_max " << format_g9(c.scale_max) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

AugmentationConfig read_augment_config(const std::string& path) {
  const std::map<std::string, std::string> kv = read_keyvals(path, nullptr);
  AugmentationConfig c;
  c.enabled = want_num(kv, "enabled", path) != 0;
  c.downsample_keep = want_num(kv, "downsample_keep", path);
  c.mask_prob = want_num(kv, "mask_prob", path);
  c.mask_width_deg = want_num(kv, "mask_width_deg", path);
  c.ground_clusters = static_cast<int>(want_num(kv, "ground_clusters", path));
  c.ground_cluster_points = static_cast<int>(want_num(kv, "ground_cluster_points", path));
  c.ground_cluster_sigma = want_num(kv, "ground_cluster_sigma", path);
  c.background_clusters = static_cast<int>(want_num(kv, "background_clusters", path));
  c.background_cluster_points =
      static_cast<int>(want_num(kv, "background_cluster_points", path));
  c.background_cluster_sigma = want_num(kv, "background_cluster_sigma", path);
  c.second_person_prob = want_num(kv, "second_person_prob", path);
  c.noise_sigma = want_num(kv, "noise_sigma", path);
  c.scale_min = want_num(kv, "scale_min", path);
  c.scale_max = want_num(kv, "scale_max", path);
  c.validate();
  return c;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out = open_out(path);
  out << "schema_version " << m.schema_version << '\n'
      << "seed " << m.seed << '\n'
      << "sequences " << m.sequences << '\n'
      << "frames " << m.frames << '\n'
      << "sensor " << format_g9(m.sensor.x()) << ' ' << format_g9(m.sensor.y()) << ' '
      << format_g9(m.sensor.z()) << '\n'
      << "body " << m.body_config << '\n'
      << "augment " << m.augment_config << '\n';
  for (size_t i = 0; i < m.sequence_dirs.size(); ++i)
    out << "sequence " << i << ' ' << m.sequence_dirs[i] << '\n';
  if (!out) throw IoError("write failed: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  DatasetManifest m;
  const std::map<std::string, std::string> kv = read_keyvals(path, &m.sequence_dirs);
  m.schema_version = static_cast<int>(want_num(kv, "schema_version", path));
  if (m.schema_version != 1)
    throw InvalidConfig(path + ": unsupported schema_version " +
                        std::to_string(m.schema_version));
  m.seed = static_cast<std::uint64_t>(want_num(kv, "seed", path));
  m.sequences = static_cast<int>(want_num(kv, "sequences", path));
  m.frames = static_cast<int>(want_num(kv, "frames", path));
  const auto sensor = kv.find("sensor");
  if (sensor != kv.end()) {
    std::istringstream ss(sensor->second);
    if (!(ss >> m.sensor.x() >> m.sensor.y() >> m.sensor.z()))
      throw InvalidConfig(path + ": bad sensor line");
  }
  const auto body = kv.find("body");
  m.body_config = body == kv.end() ? "builtin" : body->second;
  const auto aug = kv.find("augment");
  m.augment_config = aug == kv.end() ? "none" : aug->second;
  if (m.sequences != static_cast<int>(m.sequence_dirs.size()))
    throw InvalidConfig(path + ": sequence count does not match sequence lines");
  return m;
}

std::string sequence_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seq_%04d", index);
  return buf;
}

std::string frame_file_name(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%03d.ply", frame);
  return buf;
}

std::string gt_pose_file_name(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "gt_pose_%03d.txt", frame);
  return buf;
}

std::string fit_pose_file_name(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fit_pose_%03d.txt", frame);
  return buf;
}

LoadedSequence read_sequence(const std::string& dataset_dir, const DatasetManifest& manifest,
                             int index) {
  if (index < 0 || index >= manifest.sequences)
    throw InvalidInput("read_sequence: index out of range");
  const std::filesystem::path dir =
      std::filesystem::path(dataset_dir) / manifest.sequence_dirs[index];
  LoadedSequence seq;
  for (int f = 0; f < manifest.frames; ++f) {
    seq.clouds.push_back(read_ply((dir / frame_file_name(f)).string()));
    const PoseFile pf = read_pose((dir / gt_pose_file_name(f)).string());
    seq.gt_poses.push_back(pf.pose);
    seq.visibility.push_back(pf.visible);
  }
  return seq;
}

}  // namespace limbfit
