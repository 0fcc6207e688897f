#include "limbfit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace limbfit {

void CapsuleBody::validate() const {
  topology.validate();
  const int joints = topology.joint_count();
  const int limbs = topology.limb_count();
  if (static_cast<int>(rest_positions.size()) != joints)
    throw ShapeMismatch("body: rest position count != joint count");
  if (static_cast<int>(capsule_radii.size()) != limbs)
    throw ShapeMismatch("body: radius count != limb count");
  if (static_cast<int>(joint_noise_deg.size()) != joints)
    throw ShapeMismatch("body: noise count != joint count");
  if (static_cast<int>(parent.size()) != joints)
    throw ShapeMismatch("body: parent count != joint count");
  if (limbs != joints - 1) throw InvalidInput("body: limb count must be joint count - 1");
  if (root < 0 || root >= joints || parent[root] != -1)
    throw InvalidInput("body: bad root");
  if (!(scale > 0)) throw InvalidInput("body: scale must be positive");
  for (int j = 0; j < joints; ++j) {
    if (j == root) continue;
    if (parent[j] < 0 || parent[j] >= j)
      throw InvalidInput("body: parents must precede children");
  }
  for (int l = 0; l < limbs; ++l) {
    const Limb& limb = topology.limbs[l];
    if (limb.child != l + 1 || limb.parent != parent[l + 1])
      throw InvalidInput("body: limb list must mirror the joint hierarchy");
    if (!(capsule_radii[l] > 0)) throw InvalidInput("body: capsule radius must be positive");
    if (!(limb_length(l) > 0)) throw DegenerateLimb("body: zero-length limb");
  }
}

double CapsuleBody::limb_length(int l) const {
  const Limb& limb = topology.limbs[l];
  return (rest_positions[limb.child] - rest_positions[limb.parent]).norm();
}

CapsuleBody default_body() {
  CapsuleBody b;
  struct J {
    const char* name;
    int parent;
    Vec3 pos;
    double radius;     // of the limb ending at this joint
    double noise_deg;
  };
  const J joints[] = {
      {"pelvis", -1, {0.0, 0.0, 0.95}, 0.0, 0.0},
      {"neck", 0, {0.0, 0.0, 1.50}, 0.14, 5.0},
      {"head", 1, {0.0, 0.0, 1.70}, 0.09, 5.0},
      {"l_shoulder", 1, {0.0, 0.19, 1.47}, 0.06, 5.0},
      {"l_elbow", 3, {0.0, 0.19, 1.17}, 0.045, 60.0},
      {"l_wrist", 4, {0.0, 0.19, 0.90}, 0.04, 60.0},
      {"r_shoulder", 1, {0.0, -0.19, 1.47}, 0.06, 5.0},
      {"r_elbow", 6, {0.0, -0.19, 1.17}, 0.045, 60.0},
      {"r_wrist", 7, {0.0, -0.19, 0.90}, 0.04, 60.0},
      {"l_knee", 0, {0.0, 0.10, 0.50}, 0.07, 30.0},
      {"l_ankle", 9, {0.0, 0.10, 0.08}, 0.05, 30.0},
      {"r_knee", 0, {0.0, -0.10, 0.50}, 0.07, 30.0},
      {"r_ankle", 11, {0.0, -0.10, 0.08}, 0.05, 30.0},
  };
  for (const J& j : joints) {
    const int idx = static_cast<int>(b.topology.joint_names.size());
    b.topology.joint_names.push_back(j.name);
    b.rest_positions.push_back(j.pos);
    b.joint_noise_deg.push_back(j.noise_deg);
    b.parent.push_back(j.parent);
    if (j.parent >= 0) {
      b.topology.limbs.push_back(Limb{j.parent, idx});
      b.capsule_radii.push_back(j.radius);
    }
  }
  b.validate();
  return b;
}

CapsuleBody jitter_body(const CapsuleBody& body, Rng& rng, double frac) {
  body.validate();
  CapsuleBody out = body;
  const int joints = body.topology.joint_count();
  // jitter each joint's rest offset from its parent, then rebuild positions
  std::vector<Vec3> offsets(joints, Vec3::Zero());
  for (int j = 0; j < joints; ++j) {
    if (j == body.root) continue;
    const double f = 1.0 + frac * rng.uniform(-1.0, 1.0);
    offsets[j] = f * (body.rest_positions[j] - body.rest_positions[body.parent[j]]);
  }
  for (int j = 0; j < joints; ++j) {
    if (j == body.root) continue;
    out.rest_positions[j] = out.rest_positions[body.parent[j]] + offsets[j];
  }
  for (double& r : out.capsule_radii) r *= 1.0 + frac * rng.uniform(-1.0, 1.0);
  return out;
}

PoseAngles sample_end_pose(const CapsuleBody& body, Rng& rng) {
  PoseAngles out = body.rest_angles();
  for (int j = 0; j < body.topology.joint_count(); ++j) {
    const double bound = body.joint_noise_deg[j];
    for (int c = 0; c < 3; ++c) out.angles_deg[j][c] = bound * rng.uniform(-1.0, 1.0);
  }
  return out;
}

PoseAngles sample_end_pose(const CapsuleBody& body, std::uint64_t seed) {
  Rng rng(seed);
  return sample_end_pose(body, rng);
}

std::vector<PoseAngles> interpolate_sequence(const PoseAngles& start, const PoseAngles& end,
                                             int frames) {
  if (frames < 2) throw InvalidInput("interpolate_sequence: frames must be >= 2");
  if (start.joint_count() != end.joint_count())
    throw ShapeMismatch("interpolate_sequence: joint count mismatch");
  std::vector<PoseAngles> out(frames);
  for (int f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) / (frames - 1);
    out[f].angles_deg.resize(start.joint_count());
    for (int j = 0; j < start.joint_count(); ++j)
      out[f].angles_deg[j] = (1.0 - t) * start.angles_deg[j] + t * end.angles_deg[j];
  }
  return out;
}

PosedBody forward_kinematics(const CapsuleBody& body, const PoseAngles& angles) {
  if (angles.joint_count() != body.topology.joint_count())
    throw ShapeMismatch("forward_kinematics: angle count != joint count");
  const int joints = body.topology.joint_count();
  PosedBody out;
  out.pose.positions.resize(joints);
  out.limb_transforms.resize(body.topology.limb_count());
  std::vector<Mat3> cum(joints);
  for (int j = 0; j < joints; ++j) {
    const Mat3 r = euler_deg_to_matrix(angles.angles_deg[j]);
    if (j == body.root) {
      cum[j] = r;
      out.pose.positions[j] = body.scale * body.rest_positions[j];
      continue;
    }
    const int p = body.parent[j];
    cum[j] = cum[p] * r;
    const Vec3 offset = body.scale * (body.rest_positions[j] - body.rest_positions[p]);
    out.pose.positions[j] = out.pose.positions[p] + cum[j] * offset;
    // limb j-1 spans (p, j); its transform maps the scaled rest capsule so
    // both endpoints land on the posed joints
    RigidTransform t;
    t.rotation = cum[j];
    t.translation = out.pose.positions[p] - cum[j] * (body.scale * body.rest_positions[p]);
    out.limb_transforms[j - 1] = t;
  }
  return out;
}

PosedBody place(const PosedBody& posed, const RigidTransform& g) {
  PosedBody out;
  out.pose.positions.reserve(posed.pose.positions.size());
  for (const Vec3& p : posed.pose.positions) out.pose.positions.push_back(g.apply(p));
  out.limb_transforms.reserve(posed.limb_transforms.size());
  for (const RigidTransform& t : posed.limb_transforms)
    out.limb_transforms.push_back(g.compose(t));
  return out;
}

void RayCasterConfig::validate() const {
  if (azimuth_steps < 1 || beams < 1) throw InvalidConfig("raycaster: counts must be >= 1");
  if (!(max_range > 0)) throw InvalidConfig("raycaster: max_range must be positive");
  if (elev_min_deg > elev_max_deg) throw InvalidConfig("raycaster: elevation range inverted");
}

namespace {

constexpr double kRayEps = 1e-9;

// nearest positive ray parameter hitting the sphere, or +inf
double ray_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double rho) {
  const Vec3 w = o - c;
  const double b = 2.0 * w.dot(d);
  const double cc = w.squaredNorm() - rho * rho;
  const double disc = b * b - 4.0 * cc;
  if (disc < 0) return std::numeric_limits<double>::infinity();
  const double sq = std::sqrt(disc);
  const double t0 = 0.5 * (-b - sq);
  if (t0 > kRayEps) return t0;
  const double t1 = 0.5 * (-b + sq);
  if (t1 > kRayEps) return t1;
  return std::numeric_limits<double>::infinity();
}

double ray_capsule(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, double rho) {
  double best = std::numeric_limits<double>::infinity();
  const Vec3 u = b - a;
  const double len = u.norm();
  if (len > kRayEps) {
    const Vec3 m = u / len;
    const Vec3 w = o - a;
    const double dm = d.dot(m);
    const double wm = w.dot(m);
    const Vec3 dp = d - dm * m;
    const Vec3 wp = w - wm * m;
    const double qa = dp.squaredNorm();
    if (qa > 1e-12) {
      const double qb = 2.0 * dp.dot(wp);
      const double qc = wp.squaredNorm() - rho * rho;
      const double disc = qb * qb - 4.0 * qa * qc;
      if (disc >= 0) {
        const double sq = std::sqrt(disc);
        for (const double t : {(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)}) {
          if (t <= kRayEps || t >= best) continue;
          const double s = wm + t * dm;
          if (s >= 0.0 && s <= len) best = t;
        }
      }
    }
  }
  best = std::min(best, ray_sphere(o, d, a, rho));
  best = std::min(best, ray_sphere(o, d, b, rho));
  return best;
}

double wrap_angle(double x) {
  x = std::fmod(x + M_PI, 2.0 * M_PI);
  if (x < 0) x += 2.0 * M_PI;
  return x - M_PI;
}

}  // namespace

PointCloud raycast(const CapsuleBody& body, const PosedBody& posed,
                   const RayCasterConfig& config) {
  config.validate();
  const int limbs = body.topology.limb_count();
  if (static_cast<int>(posed.limb_transforms.size()) != limbs ||
      posed.pose.joint_count() != body.topology.joint_count())
    throw ShapeMismatch("raycast: posed body does not match body");

  struct Cap {
    Vec3 a, b;
    double rho;
  };
  std::vector<Cap> caps(limbs);
  Vec3 center = Vec3::Zero();
  for (int l = 0; l < limbs; ++l) {
    caps[l].a = posed.pose.positions[body.topology.limbs[l].parent];
    caps[l].b = posed.pose.positions[body.topology.limbs[l].child];
    caps[l].rho = body.capsule_radii[l] * body.scale;
    center += caps[l].a + caps[l].b;
  }
  center /= 2.0 * limbs;
  double radius = 0.0;
  for (const Cap& c : caps)
    radius = std::max({radius, (c.a - center).norm() + c.rho, (c.b - center).norm() + c.rho});

  // azimuth window of the bounding sphere as seen from the sensor; rays
  // outside it cannot hit (their vertical plane misses the sphere)
  const Vec3 rel = center - config.origin;
  const double dxy = std::hypot(rel.x(), rel.y());
  const double astep = 2.0 * M_PI / config.azimuth_steps;
  const bool prune = dxy > radius;
  const double psi = std::atan2(rel.y(), rel.x());
  const double half = prune ? std::asin(radius / dxy) + astep : 0.0;

  PointCloud cloud;
  for (int ai = 0; ai < config.azimuth_steps; ++ai) {
    const double phi = ai * astep;
    if (prune && std::abs(wrap_angle(phi - psi)) > half) continue;
    const double cphi = std::cos(phi), sphi = std::sin(phi);
    for (int bi = 0; bi < config.beams; ++bi) {
      const double elev =
          config.beams == 1
              ? config.elev_min_deg
              : config.elev_min_deg +
                    (config.elev_max_deg - config.elev_min_deg) * bi / (config.beams - 1);
      const double er = elev * M_PI / 180.0;
      const Vec3 dir(std::cos(er) * cphi, std::cos(er) * sphi, std::sin(er));
      double best = std::numeric_limits<double>::infinity();
      int best_limb = -1;
      for (int l = 0; l < limbs; ++l) {
        const double t = ray_capsule(config.origin, dir, caps[l].a, caps[l].b, caps[l].rho);
        if (t < best) {
          best = t;
          best_limb = l;
        }
      }
      if (best_limb < 0 || best > config.max_range) continue;
      const Vec3 hit = config.origin + best * dir;
      cloud.points.push_back(hit);
      cloud.gt_label.push_back(body.topology.limb_class(best_limb));
      cloud.attachment.push_back(
          LimbAttachment{best_limb, posed.limb_transforms[best_limb].inverse().apply(hit)});
    }
  }
  if (cloud.points.empty()) throw EmptyCloud("raycast: no ray hit the body");
  return cloud;
}

std::vector<Vec3> exact_flow(const PointCloud& cloud, const std::vector<RigidTransform>& from,
                             const std::vector<RigidTransform>& to) {
  if (!cloud.has_attachment()) throw MissingAttachment("exact_flow: no limb attachments");
  if (from.size() != to.size()) throw ShapeMismatch("exact_flow: transform count mismatch");
  std::vector<Vec3> flow(cloud.size(), Vec3::Zero());
  for (int i = 0; i < cloud.size(); ++i) {
    const LimbAttachment& at = cloud.attachment[i];
    if (at.limb < 0) continue;  // injected points do not move
    if (at.limb >= static_cast<int>(from.size()))
      throw MissingAttachment("exact_flow: attachment limb out of range");
    flow[i] = to[at.limb].apply(at.local) - from[at.limb].apply(at.local);
  }
  return flow;
}

void SequenceConfig::validate() const {
  if (frames < 2) throw InvalidConfig("sequence: frames must be >= 2");
  if (!(min_distance > 0) || min_distance > max_distance)
    throw InvalidConfig("sequence: bad distance range");
  if (body_jitter < 0 || body_jitter >= 1) throw InvalidConfig("sequence: bad body jitter");
  raycaster.validate();
}

SequenceRecord generate_sequence(const CapsuleBody& base, const SequenceConfig& config,
                                 std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  SequenceRecord rec;
  rec.body = jitter_body(base, rng, config.body_jitter);
  const PoseAngles end = sample_end_pose(rec.body, rng);
  const std::vector<PoseAngles> angles =
      interpolate_sequence(rec.body.rest_angles(), end, config.frames);

  const double dist = rng.uniform(config.min_distance, config.max_distance);
  const double azim = rng.uniform(0.0, 2.0 * M_PI);
  // stand the body on the ground at the drawn range, turned to face the sensor
  RigidTransform g;
  g.rotation = euler_deg_to_matrix(Vec3(0.0, 0.0, (azim + M_PI) * 180.0 / M_PI));
  g.translation = Vec3(dist * std::cos(azim), dist * std::sin(azim), 0.0);

  std::vector<PosedBody> posed(config.frames);
  rec.frames.resize(config.frames);
  for (int f = 0; f < config.frames; ++f) {
    posed[f] = place(forward_kinematics(rec.body, angles[f]), g);
    FrameRecord& fr = rec.frames[f];
    fr.cloud = raycast(rec.body, posed[f], config.raycaster);
    fr.gt_pose = posed[f].pose;

    std::vector<int> hits(rec.body.topology.joint_count(), 0);
    for (const LimbAttachment& at : fr.cloud.attachment) {
      const Limb& l = rec.body.topology.limbs[at.limb];
      ++hits[l.parent];
      ++hits[l.child];
    }
    fr.visibility.resize(hits.size());
    for (size_t j = 0; j < hits.size(); ++j) fr.visibility[j] = hits[j] >= 3 ? 1 : 0;
  }
  for (int f = 0; f + 1 < config.frames; ++f) {
    rec.frames[f].cloud.forward_flow =
        exact_flow(rec.frames[f].cloud, posed[f].limb_transforms, posed[f + 1].limb_transforms);
    rec.frames[f + 1].cloud.backward_flow = exact_flow(
        rec.frames[f + 1].cloud, posed[f + 1].limb_transforms, posed[f].limb_transforms);
  }
  return rec;
}

void AugmentationConfig::validate() const {
  if (downsample_keep <= 0 || downsample_keep > 1)
    throw InvalidConfig("augment: downsample_keep must be in (0, 1]");
  if (mask_prob < 0 || mask_prob > 1 || second_person_prob < 0 || second_person_prob > 1)
    throw InvalidConfig("augment: probabilities must be in [0, 1]");
  if (mask_width_deg < 0) throw InvalidConfig("augment: negative mask width");
  if (ground_clusters < 0 || background_clusters < 0 || ground_cluster_points < 0 ||
      background_cluster_points < 0)
    throw InvalidConfig("augment: negative cluster counts");
  if (ground_cluster_sigma < 0 || background_cluster_sigma < 0 || noise_sigma < 0)
    throw InvalidConfig("augment: negative sigma");
  if (!(scale_min > 0) || scale_min > scale_max)
    throw InvalidConfig("augment: bad scale range");
}

namespace {

struct InjectedCluster {
  std::vector<Vec3> points;
};

void append_background_point(PointCloud& c, const Vec3& p, int background_class) {
  c.points.push_back(p);
  if (c.has_forward_flow()) c.forward_flow.push_back(Vec3::Zero());
  if (c.has_backward_flow()) c.backward_flow.push_back(Vec3::Zero());
  if (c.has_labels()) c.gt_label.push_back(background_class);
  if (c.has_attachment()) c.attachment.push_back(LimbAttachment{});
  if (!c.valid.empty()) c.valid.push_back(1);
}

void remove_points(PointCloud& c, const std::vector<char>& drop) {
  int keep = 0;
  for (int i = 0; i < c.size(); ++i) {
    if (drop[i]) continue;
    c.points[keep] = c.points[i];
    if (c.has_forward_flow()) c.forward_flow[keep] = c.forward_flow[i];
    if (c.has_backward_flow()) c.backward_flow[keep] = c.backward_flow[i];
    if (c.has_labels()) c.gt_label[keep] = c.gt_label[i];
    if (c.has_attachment()) c.attachment[keep] = c.attachment[i];
    if (!c.valid.empty()) c.valid[keep] = c.valid[i];
    ++keep;
  }
  c.points.resize(keep);
  if (c.has_forward_flow()) c.forward_flow.resize(keep);
  if (c.has_backward_flow()) c.backward_flow.resize(keep);
  if (c.has_labels()) c.gt_label.resize(keep);
  if (c.has_attachment()) c.attachment.resize(keep);
  if (!c.valid.empty()) c.valid.resize(keep);
}

void augment_frames(std::vector<FrameRecord*>& frames, const AugmentationConfig& cfg,
                    int background_class, Rng& rng) {
  if (frames.empty()) return;
  // one parameter draw shared by every frame
  const double s = rng.uniform(cfg.scale_min, cfg.scale_max);
  const bool add_second = rng.uniform() < cfg.second_person_prob;
  const double second_azim = rng.uniform(0.0, 2.0 * M_PI);
  const double second_dist = rng.uniform(1.5, 3.0);
  const bool do_mask = rng.uniform() < cfg.mask_prob;
  const double mask_azim = rng.uniform(0.0, 2.0 * M_PI);
  const double mask_half = 0.5 * cfg.mask_width_deg * M_PI / 180.0;

  Vec3 anchor = frames[0]->gt_pose.positions.empty() ? Vec3::Zero()
                                                     : frames[0]->gt_pose.positions[0];
  anchor.z() = 0.0;  // scale about the ground point under the pelvis

  // person scaling first: points, keypoints, and flows together
  for (FrameRecord* fr : frames) {
    for (Vec3& p : fr->cloud.points) p = anchor + s * (p - anchor);
    for (Vec3& f : fr->cloud.forward_flow) f *= s;
    for (Vec3& f : fr->cloud.backward_flow) f *= s;
    for (Vec3& y : fr->gt_pose.positions) y = anchor + s * (y - anchor);
  }

  // injected geometry is static: drawn once, added to every frame
  std::vector<Vec3> injected;
  if (add_second) {
    const Vec3 offset(second_dist * std::cos(second_azim),
                      second_dist * std::sin(second_azim), 0.0);
    for (const Vec3& p : frames[0]->cloud.points) injected.push_back(p + offset);
  }
  for (int k = 0; k < cfg.ground_clusters; ++k) {
    const double a = rng.uniform(0.0, 2.0 * M_PI);
    const double d = rng.uniform(0.5, 2.5);
    const Vec3 c = anchor + Vec3(d * std::cos(a), d * std::sin(a), 0.0);
    for (int i = 0; i < cfg.ground_cluster_points; ++i)
      injected.push_back(c + Vec3(cfg.ground_cluster_sigma * rng.normal(),
                                  cfg.ground_cluster_sigma * rng.normal(),
                                  rng.uniform(0.0, 0.05)));
  }
  for (int k = 0; k < cfg.background_clusters; ++k) {
    const Vec3 c = anchor + Vec3(rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0),
                                 rng.uniform(0.0, 2.5));
    for (int i = 0; i < cfg.background_cluster_points; ++i)
      injected.push_back(c + Vec3(cfg.background_cluster_sigma * rng.normal(),
                                  cfg.background_cluster_sigma * rng.normal(),
                                  cfg.background_cluster_sigma * rng.normal()));
  }

  for (FrameRecord* fr : frames) {
    for (const Vec3& p : injected) append_background_point(fr->cloud, p, background_class);

    if (do_mask || cfg.downsample_keep < 1.0) {
      std::vector<char> drop(fr->cloud.size(), 0);
      for (int i = 0; i < fr->cloud.size(); ++i) {
        if (do_mask) {
          const Vec3 rel = fr->cloud.points[i] - anchor;
          if (std::abs(wrap_angle(std::atan2(rel.y(), rel.x()) - mask_azim)) <= mask_half)
            drop[i] = 1;
        }
        if (!drop[i] && cfg.downsample_keep < 1.0 && rng.uniform() >= cfg.downsample_keep)
          drop[i] = 1;
      }
      remove_points(fr->cloud, drop);
    }
    if (cfg.noise_sigma > 0) {
      for (Vec3& p : fr->cloud.points)
        p += Vec3(cfg.noise_sigma * rng.normal(), cfg.noise_sigma * rng.normal(),
                  cfg.noise_sigma * rng.normal());
    }
  }
}

}  // namespace

void augment_sequence(SequenceRecord& seq, const AugmentationConfig& config,
                      std::uint64_t seed) {
  config.validate();
  if (!config.enabled) return;
  Rng rng(seed);
  std::vector<FrameRecord*> frames;
  for (FrameRecord& fr : seq.frames) frames.push_back(&fr);
  augment_frames(frames, config, seq.body.topology.background_class(), rng);
}

void augment(FrameRecord& a, FrameRecord& b, const AugmentationConfig& config,
             std::uint64_t seed) {
  config.validate();
  if (!config.enabled) return;
  if (a.gt_pose.joint_count() != b.gt_pose.joint_count())
    throw ShapeMismatch("augment: frame joint counts differ");
  Rng rng(seed);
  std::vector<FrameRecord*> frames{&a, &b};
  const int background_class = a.gt_pose.joint_count();
  augment_frames(frames, config, background_class, rng);
}

}  // namespace limbfit
