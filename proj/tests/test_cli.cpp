#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "limbfit/cli.hpp"
#include "limbfit/geometry.hpp"

using namespace limbfit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("limbfit_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
  static int counter;
};
int TempDir::counter = 0;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// Small but dense enough that every frame keeps a usable cloud: capping the
// draw distance at 9 m keeps ~100+ points per frame on a 900x32 grid.
GenOptions tiny_gen(const std::string& out_dir, std::uint64_t seed) {
  GenOptions g;
  g.sequences = 2;
  g.frames = 2;
  g.seed = seed;
  g.out_dir = out_dir;
  g.sequence.max_distance = 9.0;
  g.sequence.raycaster.azimuth_steps = 900;
  g.sequence.raycaster.beams = 32;
  return g;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("gen writes the dataset layout") {
  TempDir tmp;
  std::ostringstream out;
  const int rc = cmd_gen(tiny_gen(tmp.sub("data"), 3), out);
  CHECK(rc == 0);
  CHECK(out.str().find("wrote 2 sequences") != std::string::npos);

  CHECK(fs::exists(tmp.sub("data") + "/manifest.txt"));
  CHECK(fs::exists(tmp.sub("data") + "/body.cfg"));
  const DatasetManifest m = read_manifest(tmp.sub("data") + "/manifest.txt");
  CHECK(m.sequences == 2);
  CHECK(m.frames == 2);
  CHECK(m.augment_config == "none");
  for (const std::string& sdir : m.sequence_dirs)
    for (int f = 0; f < 2; ++f) {
      CHECK(fs::exists(tmp.sub("data") + "/" + sdir + "/" + frame_file_name(f)));
      CHECK(fs::exists(tmp.sub("data") + "/" + sdir + "/" + gt_pose_file_name(f)));
    }

  // the clouds are loadable and labeled
  const LoadedSequence seq = read_sequence(tmp.sub("data"), m, 0);
  REQUIRE(seq.clouds.size() == 2);
  CHECK(seq.clouds[0].size() > 30);
  CHECK(seq.clouds[0].has_labels());
  CHECK(seq.clouds[0].has_forward_flow());
  CHECK(seq.clouds[1].has_backward_flow());
}

TEST_CASE("gen is byte-identical across reruns") {
  TempDir tmp;
  AugmentationConfig aug;  // defaults exercise every augmentation branch
  write_augment_config(tmp.sub("aug.cfg"), aug);

  GenOptions a = tiny_gen(tmp.sub("a"), 11);
  a.augment_config_path = tmp.sub("aug.cfg");
  GenOptions b = tiny_gen(tmp.sub("b"), 11);
  b.augment_config_path = tmp.sub("aug.cfg");

  std::ostringstream out_a, out_b;
  REQUIRE(cmd_gen(a, out_a) == 0);
  REQUIRE(cmd_gen(b, out_b) == 0);

  std::vector<std::string> files = {"manifest.txt", "body.cfg", "augment.cfg"};
  const DatasetManifest m = read_manifest(tmp.sub("a") + "/manifest.txt");
  for (const std::string& sdir : m.sequence_dirs)
    for (int f = 0; f < m.frames; ++f) {
      files.push_back(sdir + "/" + frame_file_name(f));
      files.push_back(sdir + "/" + gt_pose_file_name(f));
    }
  for (const std::string& rel : files) {
    const std::string sa = slurp(tmp.sub("a") + "/" + rel);
    const std::string sb = slurp(tmp.sub("b") + "/" + rel);
    REQUIRE(!sa.empty());
    CAPTURE(rel);
    CHECK(sa == sb);
  }

  // a different seed must change the data
  GenOptions c = tiny_gen(tmp.sub("c"), 12);
  std::ostringstream out_c;
  REQUIRE(cmd_gen(c, out_c) == 0);
  CHECK(slurp(tmp.sub("c") + "/" + m.sequence_dirs[0] + "/" + frame_file_name(0)) !=
        slurp(tmp.sub("a") + "/" + m.sequence_dirs[0] + "/" + frame_file_name(0)));
}

TEST_CASE("gen validates its options") {
  TempDir tmp;
  std::ostringstream out;
  GenOptions g = tiny_gen(tmp.sub("x"), 1);
  g.frames = 1;
  CHECK_THROWS_AS(cmd_gen(g, out), InvalidConfig);
  g = tiny_gen(tmp.sub("x"), 1);
  g.sequences = 0;
  CHECK_THROWS_AS(cmd_gen(g, out), InvalidConfig);
  g = tiny_gen("", 1);
  CHECK_THROWS_AS(cmd_gen(g, out), InvalidConfig);
}

TEST_CASE("fit writes poses and traces that eval can score") {
  TempDir tmp;
  std::ostringstream gen_out;
  REQUIRE(cmd_gen(tiny_gen(tmp.sub("data"), 21), gen_out) == 0);

  FitOptionsCli fit;
  fit.input_dir = tmp.sub("data");
  fit.out_dir = tmp.sub("fit");
  fit.iterations = 2;
  std::ostringstream fit_out;
  REQUIRE(cmd_fit(fit, fit_out) == 0);
  CHECK(fit_out.str().find("fit 2 sequences") != std::string::npos);

  const DatasetManifest m = read_manifest(tmp.sub("data") + "/manifest.txt");
  for (const std::string& sdir : m.sequence_dirs) {
    for (int f = 0; f < m.frames; ++f)
      CHECK(fs::exists(tmp.sub("fit") + "/" + sdir + "/" + fit_pose_file_name(f)));
    const std::string trace = slurp(tmp.sub("fit") + "/" + sdir + "/trace.txt");
    CHECK(trace.find("initial ") != std::string::npos);
    CHECK(trace.find("best ") != std::string::npos);
    // iterations + 1 loss entries
    CHECK(trace.find("iter 2 ") != std::string::npos);
    CHECK(trace.find("iter 3 ") == std::string::npos);
  }

  EvalOptionsCli ev;
  ev.pred_dir = tmp.sub("fit");
  ev.gt_dir = tmp.sub("data");
  ev.matched = true;
  std::ostringstream ev_out;
  REQUIRE(cmd_eval(ev, ev_out) == 0);
  CHECK(ev_out.str().find("mean mpjpe") != std::string::npos);
  CHECK(ev_out.str().find("matched") != std::string::npos);

  // scoring the ground truth against itself is exactly zero
  EvalOptionsCli self;
  self.pred_dir = tmp.sub("data");
  self.gt_dir = tmp.sub("data");
  std::ostringstream self_out;
  REQUIRE(cmd_eval(self, self_out) == 0);
  CHECK(self_out.str().find("mean mpjpe 0 m") != std::string::npos);
}

TEST_CASE("fit runs the label-free route end to end") {
  TempDir tmp;
  std::ostringstream gen_out;
  GenOptions g = tiny_gen(tmp.sub("data"), 29);
  g.sequences = 1;
  REQUIRE(cmd_gen(g, gen_out) == 0);

  FitOptionsCli fit;
  fit.input_dir = tmp.sub("data");
  fit.out_dir = tmp.sub("fit");
  fit.iterations = 1;
  fit.seg = "kmeans";
  fit.flow = "rigid";
  fit.kmeans_k = 6;
  std::ostringstream fit_out;
  REQUIRE(cmd_fit(fit, fit_out) == 0);
  CHECK(fs::exists(tmp.sub("fit") + "/" + sequence_dir_name(0) + "/" +
                   fit_pose_file_name(0)));

  FitOptionsCli nn = fit;
  nn.flow = "nn";
  nn.out_dir = tmp.sub("fit_nn");
  std::ostringstream nn_out;
  REQUIRE(cmd_fit(nn, nn_out) == 0);

  std::ostringstream sink;
  FitOptionsCli bad_seg = fit;
  bad_seg.seg = "telepathy";
  CHECK_THROWS_AS(cmd_fit(bad_seg, sink), InvalidConfig);
  FitOptionsCli bad_flow = fit;
  bad_flow.flow = "psychic";
  CHECK_THROWS_AS(cmd_fit(bad_flow, sink), InvalidConfig);
}

TEST_CASE("fit validates its options") {
  TempDir tmp;
  std::ostringstream out;
  FitOptionsCli fit;
  fit.input_dir = tmp.sub("nowhere");
  fit.weights = "bogus";
  CHECK_THROWS_AS(cmd_fit(fit, out), InvalidConfig);
  fit.weights = "stage2";
  fit.lr = 0.0;
  CHECK_THROWS_AS(cmd_fit(fit, out), InvalidConfig);
  fit.lr = 1e-3;
  fit.iterations = -1;
  CHECK_THROWS_AS(cmd_fit(fit, out), InvalidConfig);
}

TEST_CASE("eval reports missing predictions") {
  TempDir tmp;
  std::ostringstream gen_out;
  GenOptions g = tiny_gen(tmp.sub("data"), 31);
  g.sequences = 1;
  REQUIRE(cmd_gen(g, gen_out) == 0);
  fs::create_directories(tmp.sub("empty"));

  EvalOptionsCli ev;
  ev.pred_dir = tmp.sub("empty");
  ev.gt_dir = tmp.sub("data");
  std::ostringstream out;
  CHECK_THROWS_AS(cmd_eval(ev, out), FrameCountMismatch);
}

TEST_CASE("perturb command summarizes recovery trials") {
  TempDir tmp;
  std::ostringstream gen_out;
  GenOptions g = tiny_gen(tmp.sub("data"), 37);
  g.sequences = 1;
  REQUIRE(cmd_gen(g, gen_out) == 0);

  const PerturbSummary none = run_perturb(tmp.sub("data"), 0.06, 0, 1, 5, 1e-3);
  CHECK(none.trials.empty());
  CHECK(none.win_rate == doctest::Approx(0.0));

  const PerturbSummary clean = run_perturb(tmp.sub("data"), 0.0, 1, 1, 0, 1e-3);
  REQUIRE(clean.trials.size() == 1);
  CHECK(clean.trials[0].report.initial_matched == doctest::Approx(0.0));
  CHECK(clean.trials[0].report.final_matched == doctest::Approx(0.0));

  PerturbOptionsCli o;
  o.input_dir = tmp.sub("data");
  o.trials = 2;
  o.iterations = 5;
  std::ostringstream out;
  REQUIRE(cmd_perturb(o, out) == 0);
  CHECK(out.str().find("trials 2") != std::string::npos);
  CHECK(out.str().find("win_rate") != std::string::npos);
  CHECK(out.str().find("median_reduction_pct") != std::string::npos);
}

TEST_CASE("gradcheck command prints a verdict") {
  GradcheckOptionsCli o;
  o.configs = 2;
  o.points = 64;
  std::ostringstream out;
  CHECK(cmd_gradcheck(o, out) == 0);
  CHECK(out.str().find("flow max_rel_err") != std::string::npos);
  CHECK(out.str().find("total max_rel_err") != std::string::npos);
  CHECK(out.str().find("status pass") != std::string::npos);

  GradcheckOptionsCli strict = o;
  strict.tolerance = 1e-16;  // nothing passes a tolerance below roundoff
  std::ostringstream out2;
  CHECK(cmd_gradcheck(strict, out2) == 2);
  CHECK(out2.str().find("status fail") != std::string::npos);
}

TEST_CASE("gradient scenarios respect their sampling margins") {
  Rng rng(55);
  const GradScenario s = make_grad_scenario(96, rng);
  REQUIRE(s.seq.frames.size() == 2);
  REQUIRE(s.poses.size() == 2);
  CHECK(!s.seq.frames[0].cloud.forward_flow.empty());
  CHECK(!s.seq.frames[1].cloud.backward_flow.empty());

  for (const SkeletonPose& pose : s.poses)
    for (const Limb& l : s.topo.limbs)
      CHECK((pose.positions[l.child] - pose.positions[l.parent]).norm() >= 0.15 - 1e-12);

  for (int f = 0; f < 2; ++f) {
    const PointCloud& c = s.seq.frames[f].cloud;
    const SkeletonPose& pose = s.poses[f];
    REQUIRE(c.size() == 96);
    s.seq.frames[f].assignment.validate();
    for (int i = 0; i < c.size(); ++i) {
      CHECK((c.valid[i] == 0) == (i % 16 == 7));
      if (!c.is_valid(i)) continue;
      for (const Limb& l : s.topo.limbs)
        CHECK(point_segment_distance(c.points[i], pose.positions[l.parent],
                                     pose.positions[l.child]) >= 0.05 - 1e-12);
    }
  }
}

}  // TEST_SUITE
