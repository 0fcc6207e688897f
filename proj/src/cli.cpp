#include "limbfit/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "limbfit/flow.hpp"
#include "limbfit/parallel.hpp"

namespace fs = std::filesystem;

namespace limbfit {

namespace {

constexpr std::uint64_t kAugSalt = 0x6175676d656e74ULL;
constexpr std::uint64_t kSegSalt = 0x7365676d656e74ULL;

std::string join(const std::string& a, const std::string& b) {
  return (fs::path(a) / b).string();
}

std::string cm2(double meters) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", meters * 100.0);
  return buf;
}

struct Dataset {
  std::string dir;
  DatasetManifest manifest;
  CapsuleBody body;
};

Dataset open_dataset(const std::string& dir) {
  if (dir.empty()) throw InvalidConfig("--input directory is required");
  Dataset d;
  d.dir = dir;
  d.manifest = read_manifest(join(dir, "manifest.txt"));
  d.body = d.manifest.body_config == "builtin"
               ? default_body()
               : read_body_config(join(dir, d.manifest.body_config));
  d.body.validate();
  return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// gen

int cmd_gen(const GenOptions& o, std::ostream& out) {
  if (o.sequences < 1) throw InvalidConfig("gen: --sequences must be >= 1");
  if (o.frames < 2) throw InvalidConfig("gen: --frames must be >= 2 (flow needs frame pairs)");
  if (o.out_dir.empty()) throw InvalidConfig("gen: --out is required");
  SequenceConfig scfg = o.sequence;
  scfg.frames = o.frames;
  scfg.validate();

  const CapsuleBody base =
      o.body_config_path.empty() ? default_body() : read_body_config(o.body_config_path);
  base.validate();
  const bool augmented = !o.augment_config_path.empty();
  AugmentationConfig aug;
  if (augmented) aug = read_augment_config(o.augment_config_path);

  fs::create_directories(o.out_dir);
  write_body_config(join(o.out_dir, "body.cfg"), base);
  if (augmented) write_augment_config(join(o.out_dir, "augment.cfg"), aug);

  DatasetManifest manifest;
  manifest.seed = o.seed;
  manifest.sequences = o.sequences;
  manifest.frames = o.frames;
  manifest.sensor = scfg.raycaster.origin;
  manifest.body_config = "body.cfg";
  manifest.augment_config = augmented ? "augment.cfg" : "none";
  for (int i = 0; i < o.sequences; ++i) {
    manifest.sequence_dirs.push_back(sequence_dir_name(i));
    fs::create_directories(join(o.out_dir, manifest.sequence_dirs[i]));
  }

  parallel_for(o.sequences, [&](int i) {
    SequenceRecord rec = generate_sequence(base, scfg, mix_seed(o.seed, i));
    if (augmented) augment_sequence(rec, aug, mix_seed(o.seed ^ kAugSalt, i));
    const std::string dir = join(o.out_dir, manifest.sequence_dirs[i]);
    for (int f = 0; f < o.frames; ++f) {
      write_ply(join(dir, frame_file_name(f)), rec.frames[f].cloud);
      write_pose(join(dir, gt_pose_file_name(f)), rec.body.topology, rec.frames[f].gt_pose,
                 rec.frames[f].visibility);
    }
  });
  write_manifest(join(o.out_dir, "manifest.txt"), manifest);

  out << "wrote " << o.sequences << " sequences x " << o.frames << " frames to " << o.out_dir
      << "\n";
  out << "augmentation: " << manifest.augment_config << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// shared fit/perturb plumbing

namespace {

std::vector<int> row_argmax(const SoftAssignment& w) {
  std::vector<int> labels(static_cast<size_t>(w.size()));
  for (int i = 0; i < w.size(); ++i) {
    Eigen::Index best = 0;
    w.weights.row(i).maxCoeff(&best);
    labels[static_cast<size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

// Segmentation route: ground-truth labels from the dataset or the label-free
// clustering pipeline.
std::vector<SoftAssignment> make_assignments(const std::vector<PointCloud>& clouds,
                                             const std::string& seg, int kmeans_k,
                                             const Dataset& d, int seq_index) {
  const int num_classes = d.body.topology.num_classes();
  if (seg == "gt") {
    std::vector<SoftAssignment> ws;
    ws.reserve(clouds.size());
    for (const PointCloud& c : clouds) {
      if (!c.has_labels())
        throw InvalidInput("fit: dataset has no seg_label fields; use --seg kmeans");
      ws.push_back(one_hot_assignment(c.gt_label, num_classes));
    }
    return ws;
  }
  if (seg == "kmeans") {
    std::vector<const PointCloud*> ptrs;
    ptrs.reserve(clouds.size());
    for (const PointCloud& c : clouds) ptrs.push_back(&c);
    const int k = kmeans_k > 0 ? kmeans_k : d.body.topology.joint_count();
    return segment_sequence(ptrs, k, mix_seed(d.manifest.seed ^ kSegSalt, seq_index), d.body,
                            d.manifest.sensor, BackgroundFilterConfig{});
  }
  throw InvalidConfig("fit: --seg must be gt or kmeans");
}

// Flow route: dataset fields, nearest-neighbor, or per-part rigid estimates.
void fill_flows(std::vector<PointCloud>& clouds, const std::vector<SoftAssignment>& ws,
                const std::string& flow) {
  const int frames = static_cast<int>(clouds.size());
  if (flow == "gt") {
    for (int f = 0; f < frames; ++f) {
      if (f + 1 < frames && !clouds[f].has_forward_flow())
        throw MissingFlow("fit: dataset has no forward flow; use --flow nn or rigid");
      if (f > 0 && !clouds[f].has_backward_flow())
        throw MissingFlow("fit: dataset has no backward flow; use --flow nn or rigid");
    }
    return;
  }
  if (flow != "nn" && flow != "rigid")
    throw InvalidConfig("fit: --flow must be gt, nn, or rigid");
  for (int f = 0; f + 1 < frames; ++f) {
    FlowField field;
    if (flow == "nn") {
      field = nn_flow(clouds[f], clouds[f + 1]);
    } else {
      field = rigid_part_flow(clouds[f], row_argmax(ws[f]), clouds[f + 1],
                              row_argmax(ws[f + 1]));
    }
    clouds[f].forward_flow = field.forward;
    clouds[f + 1].backward_flow = field.backward;
  }
}

// Median of the non-background points; falls back to all points.
Vec3 foreground_center(const PointCloud& cloud, const SoftAssignment& w) {
  const int bg = w.num_classes() - 1;
  std::vector<Vec3> fg;
  for (int i = 0; i < cloud.size(); ++i) {
    if (!cloud.is_valid(i)) continue;
    Eigen::Index best = 0;
    w.weights.row(i).maxCoeff(&best);
    if (static_cast<int>(best) != bg) fg.push_back(cloud.points[i]);
  }
  if (fg.empty())
    for (int i = 0; i < cloud.size(); ++i)
      if (cloud.is_valid(i)) fg.push_back(cloud.points[i]);
  if (fg.empty()) throw EmptyCloud("fit: sequence frame has no valid points");
  return median_center(fg);
}

// Label-free initialization: the rest-pose template stood at the first
// frame's foreground center, facing the sensor.
std::vector<SkeletonPose> template_init(const std::vector<PointCloud>& clouds,
                                        const std::vector<SoftAssignment>& ws,
                                        const CapsuleBody& body, const Vec3& sensor) {
  const Vec3 center = foreground_center(clouds.front(), ws.front());
  const RigidTransform g = template_placement(body, center, sensor);
  const PosedBody posed = place(forward_kinematics(body, body.rest_angles()), g);
  return std::vector<SkeletonPose>(clouds.size(), posed.pose);
}

SequenceData to_sequence_data(std::vector<PointCloud>&& clouds,
                              std::vector<SoftAssignment>&& ws) {
  SequenceData seq;
  seq.frames.reserve(clouds.size());
  for (size_t f = 0; f < clouds.size(); ++f)
    seq.frames.push_back(FrameData{std::move(clouds[f]), std::move(ws[f])});
  return seq;
}

}  // namespace

// ---------------------------------------------------------------------------
// fit

int cmd_fit(const FitOptionsCli& o, std::ostream& out) {
  if (o.iterations < 0) throw InvalidConfig("fit: --iters must be >= 0");
  if (!(o.lr > 0)) throw InvalidConfig("fit: --lr must be positive");
  LossConfig cfg;
  if (o.weights == "stage2") {
    cfg = LossConfig::stage2_defaults();
  } else if (o.weights == "supp-demo") {
    cfg = LossConfig::supp_demo();
  } else {
    throw InvalidConfig("fit: --weights must be stage2 or supp-demo");
  }
  const Dataset d = open_dataset(o.input_dir);
  FitOptions fopts;
  fopts.iterations = o.iterations;
  fopts.adam.lr = o.lr;
  const std::string out_dir = o.out_dir.empty() ? o.input_dir : o.out_dir;

  std::vector<std::uint8_t> all_visible(static_cast<size_t>(d.body.topology.joint_count()), 1);
  for (int s = 0; s < d.manifest.sequences; ++s) {
    LoadedSequence loaded = read_sequence(d.dir, d.manifest, s);
    std::vector<SoftAssignment> ws = make_assignments(loaded.clouds, o.seg, o.kmeans_k, d, s);
    fill_flows(loaded.clouds, ws, o.flow);
    const std::vector<SkeletonPose> init =
        template_init(loaded.clouds, ws, d.body, d.manifest.sensor);
    const SequenceData seq = to_sequence_data(std::move(loaded.clouds), std::move(ws));

    FitTrace trace;
    const std::vector<SkeletonPose> fitted =
        fit_sequence(seq, init, d.body.topology, cfg, fopts, &trace);

    const std::string seq_dir = join(out_dir, d.manifest.sequence_dirs[s]);
    fs::create_directories(seq_dir);
    for (int f = 0; f < d.manifest.frames; ++f)
      write_pose(join(seq_dir, fit_pose_file_name(f)), d.body.topology, fitted[f], all_visible);
    std::ofstream tr(join(seq_dir, "trace.txt"));
    if (!tr) throw IoError("cannot write " + join(seq_dir, "trace.txt"));
    tr << "initial " << format_g9(trace.initial_loss) << '\n'
       << "best " << format_g9(trace.best_loss) << '\n'
       << "best_iteration " << trace.best_iteration << '\n';
    for (size_t i = 0; i < trace.loss_history.size(); ++i)
      tr << "iter " << i << ' ' << format_g9(trace.loss_history[i]) << '\n';
    if (!tr) throw IoError("write failed: " + join(seq_dir, "trace.txt"));

    out << d.manifest.sequence_dirs[s] << " loss " << format_g9(trace.initial_loss) << " -> "
        << format_g9(trace.best_loss) << " (iter " << trace.best_iteration << ")\n";
  }
  out << "fit " << d.manifest.sequences << " sequences -> " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const EvalOptionsCli& o, std::ostream& out) {
  if (o.pred_dir.empty() || o.gt_dir.empty())
    throw InvalidConfig("eval: --pred and --gt are required");
  const Dataset d = open_dataset(o.gt_dir);

  double sum = 0.0, sum_matched = 0.0;
  int count = 0;
  for (int s = 0; s < d.manifest.sequences; ++s) {
    const std::string& sdir = d.manifest.sequence_dirs[s];
    for (int f = 0; f < d.manifest.frames; ++f) {
      const PoseFile gt = read_pose(join(join(o.gt_dir, sdir), gt_pose_file_name(f)));
      std::string pred_path = join(join(o.pred_dir, sdir), fit_pose_file_name(f));
      if (!fs::exists(pred_path)) {
        pred_path = join(join(o.pred_dir, sdir), gt_pose_file_name(f));
        if (!fs::exists(pred_path))
          throw FrameCountMismatch("eval: no prediction for " + sdir + " frame " +
                                   std::to_string(f));
      }
      const PoseFile pred = read_pose(pred_path);
      const double e = mpjpe(pred.pose, gt.pose, gt.visible);
      sum += e;
      ++count;
      out << sdir << " frame " << f << " mpjpe " << format_g9(e) << " m " << cm2(e) << " cm";
      if (o.matched) {
        const double m = matched_mpjpe(pred.pose, gt.pose, gt.visible);
        sum_matched += m;
        out << " matched " << format_g9(m) << " m " << cm2(m) << " cm";
      }
      out << '\n';
    }
  }
  if (count == 0) throw InvalidInput("eval: dataset has no frames");
  out << "mean mpjpe " << format_g9(sum / count) << " m " << cm2(sum / count) << " cm";
  if (o.matched)
    out << " matched " << format_g9(sum_matched / count) << " m " << cm2(sum_matched / count)
        << " cm";
  out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// perturb

PerturbSummary run_perturb(const std::string& dataset_dir, double sigma, int trials,
                           std::uint64_t seed, int iterations, double lr) {
  if (trials < 0) throw InvalidConfig("perturb: --trials must be >= 0");
  if (sigma < 0) throw InvalidConfig("perturb: --sigma must be >= 0");
  PerturbSummary summary;
  if (trials == 0) return summary;

  const Dataset d = open_dataset(dataset_dir);
  if (d.manifest.frames < 2) throw InvalidConfig("perturb: dataset needs >= 2 frames");
  const LossConfig cfg = LossConfig::supp_demo();
  FitOptions fopts;
  fopts.iterations = iterations;
  fopts.adam.lr = lr;

  std::map<int, LoadedSequence> cache;
  std::vector<double> reductions;
  int wins = 0;
  for (int t = 0; t < trials; ++t) {
    const int s = t % d.manifest.sequences;
    auto it = cache.find(s);
    if (it == cache.end()) it = cache.emplace(s, read_sequence(d.dir, d.manifest, s)).first;
    const LoadedSequence& loaded = it->second;

    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(t)));
    const int f0 = static_cast<int>(rng.index(static_cast<std::uint64_t>(d.manifest.frames - 1)));

    std::vector<PointCloud> clouds{loaded.clouds[f0], loaded.clouds[f0 + 1]};
    std::vector<SoftAssignment> ws = make_assignments(clouds, "gt", 0, d, s);
    fill_flows(clouds, ws, "gt");
    const std::vector<SkeletonPose> gt{loaded.gt_poses[f0], loaded.gt_poses[f0 + 1]};
    const SequenceData seq = to_sequence_data(std::move(clouds), std::move(ws));

    PerturbTrial trial;
    trial.trial = t;
    trial.sequence = s;
    trial.frame = f0;
    trial.report = perturb_recovery(seq, gt, d.body.topology, sigma, cfg, fopts, rng.bits());
    if (trial.report.final_matched < trial.report.initial_matched) ++wins;
    reductions.push_back(
        trial.report.initial_matched > 0.0
            ? 100.0 * (trial.report.initial_matched - trial.report.final_matched) /
                  trial.report.initial_matched
            : 0.0);
    summary.trials.push_back(std::move(trial));
  }
  summary.win_rate = static_cast<double>(wins) / trials;
  std::sort(reductions.begin(), reductions.end());
  const size_t n = reductions.size();
  summary.median_reduction_pct =
      n % 2 == 1 ? reductions[n / 2] : 0.5 * (reductions[n / 2 - 1] + reductions[n / 2]);
  return summary;
}

int cmd_perturb(const PerturbOptionsCli& o, std::ostream& out) {
  const PerturbSummary s =
      run_perturb(o.input_dir, o.sigma, o.trials, o.seed, o.iterations, o.lr);
  for (const PerturbTrial& t : s.trials)
    out << "trial " << t.trial << " seq " << t.sequence << " frame " << t.frame << " initial "
        << format_g9(t.report.initial_mpjpe) << " final " << format_g9(t.report.final_mpjpe)
        << " matched_initial " << format_g9(t.report.initial_matched) << " matched_final "
        << format_g9(t.report.final_matched) << '\n';
  out << "trials " << s.trials.size() << '\n';
  out << "win_rate " << format_g9(s.win_rate) << '\n';
  out << "median_reduction_pct " << format_g9(s.median_reduction_pct) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

namespace {

bool same3(const Vec3& a, const Vec3& b) {
  return a.x() == b.x() && a.y() == b.y() && a.z() == b.z();
}

// Stage-2 objective decomposed into per-limb pieces with memoization. Central
// differences move one coordinate at a time, so between evaluations only the
// limbs touching that joint change; everything else is served from the cache.
// The decomposition reproduces stage2_objective exactly: flow_loss, p2l_loss
// and sym_loss are plain means over limbs, so a single-limb topology yields
// one limb's contribution.
class CachedStage2 {
 public:
  CachedStage2(const SequenceData& seq, const SkeletonTopology& topo, const LossConfig& cfg)
      : seq_(seq), topo_(topo), cfg_(cfg), frames_(static_cast<int>(seq.frames.size())) {
    cfg_.validate();
    for (const Limb& l : topo.limbs) {
      SkeletonTopology single;
      single.joint_names = topo.joint_names;
      single.limbs = {l};
      single_.push_back(std::move(single));
    }
    for (const FrameData& fr : seq_.frames) {
      ctx_.push_back(AssignmentContext::build(fr.cloud, fr.assignment));
      double acc = 0.0;
      for (int i = 0; i < fr.cloud.size(); ++i) {
        if (!fr.cloud.is_valid(i)) continue;
        Eigen::Index best = 0;
        fr.assignment.weights.row(i).maxCoeff(&best);
        acc -= std::log(std::max(fr.assignment.weights(i, best), cfg_.eps_prob));
      }
      seg_ += acc;
    }
    seg_ /= frames_;
    p2l_cache_.assign(static_cast<size_t>(frames_), std::vector<LimbCache>(topo.limbs.size()));
    sym_cache_ = p2l_cache_;
    if (frames_ >= 2)
      flow_cache_.assign(static_cast<size_t>(frames_ - 1),
                         std::vector<PairCache>(topo.limbs.size()));
  }

  double operator()(const std::vector<SkeletonPose>& poses) {
    LossBreakdown b;
    b.seg = seg_;
    const int limbs = topo_.limb_count();
    for (int f = 0; f < frames_; ++f) {
      const FrameData& fr = seq_.frames[f];
      if (cfg_.lambda_p2l > 0) {
        double acc = 0.0;
        for (int l = 0; l < limbs; ++l) {
          LimbCache& c = p2l_cache_[f][l];
          const Vec3& ya = poses[f].positions[topo_.limbs[l].parent];
          const Vec3& yb = poses[f].positions[topo_.limbs[l].child];
          if (!c.set || !same3(c.ya, ya) || !same3(c.yb, yb)) {
            c.value = p2l_loss(fr.cloud, fr.assignment, poses[f], single_[l], cfg_);
            c.ya = ya;
            c.yb = yb;
            c.set = true;
          }
          acc += c.value;
        }
        b.p2l += acc / limbs;
      }
      if (cfg_.lambda_sym > 0) {
        double acc = 0.0;
        for (int l = 0; l < limbs; ++l) {
          LimbCache& c = sym_cache_[f][l];
          const Vec3& ya = poses[f].positions[topo_.limbs[l].parent];
          const Vec3& yb = poses[f].positions[topo_.limbs[l].child];
          if (!c.set || !same3(c.ya, ya) || !same3(c.yb, yb)) {
            c.value = detail::sym_limb_terms(fr.cloud, fr.assignment, ctx_[f], ya, yb,
                                             topo_.limb_class(l), cfg_.bandwidth, cfg_)
                          .loss;
            c.ya = ya;
            c.yb = yb;
            c.set = true;
          }
          acc += c.value;
        }
        b.sym += acc / limbs;
      }
      if (cfg_.lambda_j2p > 0) b.j2p += j2p_loss(fr.cloud, fr.assignment, poses[f], cfg_);
    }
    b.p2l /= frames_;
    b.sym /= frames_;
    b.j2p /= frames_;
    if (cfg_.lambda_flow > 0 && frames_ >= 2) {
      for (int f = 0; f + 1 < frames_; ++f) {
        const FramePair pair{seq_.frames[f].cloud,      seq_.frames[f + 1].cloud,
                             seq_.frames[f].assignment, seq_.frames[f + 1].assignment,
                             poses[f],                  poses[f + 1]};
        double acc = 0.0;
        for (int l = 0; l < limbs; ++l) {
          PairCache& c = flow_cache_[f][l];
          const Vec3& a0 = poses[f].positions[topo_.limbs[l].parent];
          const Vec3& b0 = poses[f].positions[topo_.limbs[l].child];
          const Vec3& a1 = poses[f + 1].positions[topo_.limbs[l].parent];
          const Vec3& b1 = poses[f + 1].positions[topo_.limbs[l].child];
          if (!c.set || !same3(c.a0, a0) || !same3(c.b0, b0) || !same3(c.a1, a1) ||
              !same3(c.b1, b1)) {
            c.value = flow_loss(pair, single_[l], cfg_);
            c.a0 = a0;
            c.b0 = b0;
            c.a1 = a1;
            c.b1 = b1;
            c.set = true;
          }
          acc += c.value;
        }
        b.flow += acc / limbs;
      }
      b.flow /= (frames_ - 1);
    }
    return b.weighted_total(cfg_);
  }

 private:
  struct LimbCache {
    bool set = false;
    Vec3 ya = Vec3::Zero(), yb = Vec3::Zero();
    double value = 0.0;
  };
  struct PairCache {
    bool set = false;
    Vec3 a0 = Vec3::Zero(), b0 = Vec3::Zero(), a1 = Vec3::Zero(), b1 = Vec3::Zero();
    double value = 0.0;
  };

  const SequenceData& seq_;
  const SkeletonTopology& topo_;
  LossConfig cfg_;
  int frames_;
  std::vector<SkeletonTopology> single_;
  std::vector<AssignmentContext> ctx_;
  double seg_ = 0.0;
  std::vector<std::vector<LimbCache>> p2l_cache_;
  std::vector<std::vector<LimbCache>> sym_cache_;
  std::vector<std::vector<PairCache>> flow_cache_;
};

LossConfig single_term(const LossConfig& base, double LossConfig::* lambda) {
  LossConfig c = base;
  c.lambda_flow = c.lambda_p2l = c.lambda_sym = c.lambda_j2p = c.lambda_seg = c.lambda_kp = 0.0;
  c.*lambda = 1.0;
  return c;
}

}  // namespace

GradScenario make_grad_scenario(int n_points, Rng& rng) {
  if (n_points < 1) throw InvalidConfig("scenario: point count must be >= 1");
  // Margins keep every sample away from the loss kinks (limb axes, |dr| and
  // |dz| sign changes) AND away from the high-curvature neighborhoods around
  // them, where central differences lose accuracy to truncation error.
  constexpr double kMinLen = 0.15;    // limb length floor
  constexpr double kMinR = 0.05;      // clearance from every limb axis line
  constexpr double kMinDelta = 0.02;  // |dr|, |dz| floor under flow
  constexpr double kMinJ2p = 1e-3;    // joint-to-centroid floor
  constexpr int kTries = 2000;

  const CapsuleBody body = default_body();
  GradScenario s;
  s.topo = body.topology;
  const int joints = s.topo.joint_count();
  const int classes = s.topo.num_classes();

  auto sample_pose = [&]() {
    for (int attempt = 0; attempt < kTries; ++attempt) {
      SkeletonPose p;
      p.positions.resize(static_cast<size_t>(joints));
      for (int j = 0; j < joints; ++j)
        for (int c = 0; c < 3; ++c)
          p.positions[static_cast<size_t>(j)][c] =
              body.rest_positions[static_cast<size_t>(j)][c] + rng.uniform(-0.04, 0.04);
      bool ok = true;
      for (const Limb& l : s.topo.limbs)
        if ((p.positions[static_cast<size_t>(l.child)] -
             p.positions[static_cast<size_t>(l.parent)])
                .norm() < kMinLen) {
          ok = false;
          break;
        }
      if (ok) return p;
    }
    throw NumericError("scenario: no valid pose after retries");
  };

  auto line_clear = [&](const Vec3& p) {
    for (const SkeletonPose& pose : s.poses)
      for (const Limb& l : s.topo.limbs) {
        const LimbCoords c =
            cylindrical_coords(p, pose.positions[static_cast<size_t>(l.parent)],
                               pose.positions[static_cast<size_t>(l.child)]);
        if (c.r < kMinR) return false;
      }
    return true;
  };

  auto unit_dir = [&]() {
    while (true) {
      const Vec3 v(rng.normal(), rng.normal(), rng.normal());
      const double n = v.norm();
      if (n > 1e-6) return Vec3(v / n);
    }
  };

  auto sample_point = [&]() {
    for (int attempt = 0; attempt < kTries; ++attempt) {
      const Limb& l = s.topo.limbs[rng.index(static_cast<std::uint64_t>(s.topo.limb_count()))];
      const Vec3& ya = s.poses[0].positions[static_cast<size_t>(l.parent)];
      const Vec3& yb = s.poses[0].positions[static_cast<size_t>(l.child)];
      const Vec3 p =
          ya + rng.uniform(-0.15, 1.15) * (yb - ya) + rng.uniform(0.08, 0.3) * unit_dir();
      if (line_clear(p)) return p;
    }
    throw NumericError("scenario: no clear point after retries");
  };

  // Flow from one frame's pose to the other's must move every limb's (r, z)
  // by at least kMinDelta so the absolute values stay away from their kinks.
  auto sample_flow = [&](const Vec3& p, const SkeletonPose& from, const SkeletonPose& to) {
    for (int attempt = 0; attempt < kTries; ++attempt) {
      const Vec3 f(rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15),
                   rng.uniform(-0.15, 0.15));
      const Vec3 q = p + f;
      if (!line_clear(q)) continue;
      bool ok = true;
      for (const Limb& l : s.topo.limbs) {
        const LimbCoords here =
            cylindrical_coords(p, from.positions[static_cast<size_t>(l.parent)],
                               from.positions[static_cast<size_t>(l.child)]);
        const LimbCoords there =
            cylindrical_coords(q, to.positions[static_cast<size_t>(l.parent)],
                               to.positions[static_cast<size_t>(l.child)]);
        if (std::abs(there.r - here.r) < kMinDelta || std::abs(there.z - here.z) < kMinDelta) {
          ok = false;
          break;
        }
      }
      if (ok) return f;
    }
    throw NumericError("scenario: no kink-clear flow after retries");
  };

  auto sample_assignment = [&](int n, bool soft) {
    SoftAssignment w;
    if (soft) {
      // the 0.3 floor keeps kernel denominators well away from the skip
      // threshold so no subgradient branches fire during the check
      w.weights.resize(n, classes);
      for (int i = 0; i < n; ++i) {
        for (int c = 0; c < classes; ++c) w.weights(i, c) = 0.3 + rng.uniform();
        w.weights.row(i) /= w.weights.row(i).sum();
      }
    } else {
      std::vector<int> labels(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i)
        labels[static_cast<size_t>(i)] =
            static_cast<int>(rng.index(static_cast<std::uint64_t>(classes)));
      w = one_hot_assignment(labels, classes);
    }
    return w;
  };

  auto joints_clear_of_centroids = [&]() {
    for (size_t f = 0; f < s.seq.frames.size(); ++f) {
      const FrameData& fr = s.seq.frames[f];
      for (int j = 0; j < joints; ++j) {
        double total = 0.0;
        Vec3 centroid = Vec3::Zero();
        for (int i = 0; i < fr.cloud.size(); ++i) {
          if (!fr.cloud.is_valid(i)) continue;
          const double wi = fr.assignment.weights(i, j);
          total += wi;
          centroid += wi * fr.cloud.points[i];
        }
        if (total <= 1e-9) continue;
        if ((s.poses[f].positions[static_cast<size_t>(j)] - centroid / total).norm() < kMinJ2p)
          return false;
      }
    }
    return true;
  };

  for (int attempt = 0; attempt < 50; ++attempt) {
    s.poses.clear();
    s.poses.push_back(sample_pose());
    s.poses.push_back(sample_pose());
    const bool soft = rng.uniform() < 0.5;

    s.seq.frames.clear();
    for (int f = 0; f < 2; ++f) {
      FrameData fr;
      fr.cloud.points.resize(static_cast<size_t>(n_points));
      fr.cloud.valid.assign(static_cast<size_t>(n_points), 1);
      for (int i = 0; i < n_points; ++i) {
        fr.cloud.points[static_cast<size_t>(i)] = sample_point();
        if (i % 16 == 7) fr.cloud.valid[static_cast<size_t>(i)] = 0;
      }
      fr.assignment = sample_assignment(n_points, soft);
      s.seq.frames.push_back(std::move(fr));
    }
    PointCloud& c0 = s.seq.frames[0].cloud;
    PointCloud& c1 = s.seq.frames[1].cloud;
    c0.forward_flow.resize(static_cast<size_t>(n_points));
    c1.backward_flow.resize(static_cast<size_t>(n_points));
    for (int i = 0; i < n_points; ++i) {
      c0.forward_flow[static_cast<size_t>(i)] =
          sample_flow(c0.points[static_cast<size_t>(i)], s.poses[0], s.poses[1]);
      c1.backward_flow[static_cast<size_t>(i)] =
          sample_flow(c1.points[static_cast<size_t>(i)], s.poses[1], s.poses[0]);
    }
    if (joints_clear_of_centroids()) return s;
  }
  throw NumericError("scenario: joint/centroid margin unsatisfied after retries");
}

GradcheckSummary run_gradcheck(std::uint64_t seed, int configs, int n_points, double step) {
  if (configs < 1) throw InvalidConfig("gradcheck: --configs must be >= 1");
  if (n_points < 1) throw InvalidConfig("gradcheck: point count must be >= 1");
  if (!(step > 0)) throw InvalidConfig("gradcheck: step must be positive");

  const LossConfig base = LossConfig::stage2_defaults();
  struct Term {
    const char* name;
    LossConfig cfg;
  };
  const std::vector<Term> terms = {
      {"flow", single_term(base, &LossConfig::lambda_flow)},
      {"p2l", single_term(base, &LossConfig::lambda_p2l)},
      {"sym", single_term(base, &LossConfig::lambda_sym)},
      {"j2p", single_term(base, &LossConfig::lambda_j2p)},
      {"seg", single_term(base, &LossConfig::lambda_seg)},
      {"total", base},
  };

  GradcheckSummary summary;
  for (const Term& t : terms) summary.rows.push_back(GradcheckRow{t.name, 0.0});

  for (int i = 0; i < configs; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    const GradScenario sc = make_grad_scenario(n_points, rng);
    for (size_t k = 0; k < terms.size(); ++k) {
      CachedStage2 objective(sc.seq, sc.topo, terms[k].cfg);
      const std::vector<PoseGrad> analytic =
          stage2_gradient(sc.seq, sc.poses, sc.topo, terms[k].cfg);
      const double err = finite_diff_check(
          [&objective](const std::vector<SkeletonPose>& poses) { return objective(poses); },
          sc.poses, analytic, step);
      summary.rows[k].max_rel_err = std::max(summary.rows[k].max_rel_err, err);
    }
  }
  for (const GradcheckRow& r : summary.rows) summary.worst = std::max(summary.worst, r.max_rel_err);
  return summary;
}

int cmd_gradcheck(const GradcheckOptionsCli& o, std::ostream& out) {
  const GradcheckSummary s = run_gradcheck(o.seed, o.configs, o.points, o.step);
  out << "configs " << o.configs << " points " << o.points << " step " << format_g9(o.step)
      << '\n';
  for (const GradcheckRow& r : s.rows)
    out << r.loss << " max_rel_err " << format_g9(r.max_rel_err) << '\n';
  out << "worst " << format_g9(s.worst) << " tolerance " << format_g9(o.tolerance) << '\n';
  if (s.worst > o.tolerance) {
    out << "status fail\n";
    return 2;
  }
  out << "status pass\n";
  return 0;
}

}  // namespace limbfit
