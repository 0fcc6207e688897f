#pragma once

#include <iosfwd>
#include <string>

#include "limbfit/eval.hpp"
#include "limbfit/io.hpp"
#include "limbfit/optimizer.hpp"
#include "limbfit/rng.hpp"
#include "limbfit/segmentation.hpp"

namespace limbfit {

struct GenOptions {
  int sequences = 1000;
  int frames = 16;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string body_config_path;     // empty = built-in default body
  std::string augment_config_path;  // empty = no augmentation
  SequenceConfig sequence;
};

struct FitOptionsCli {
  std::string input_dir;
  std::string out_dir;
  std::string weights = "stage2";  // stage2 | supp-demo
  int iterations = 100;
  double lr = 1e-3;
  std::string seg = "gt";    // gt | kmeans
  std::string flow = "gt";   // gt | nn | rigid
  int kmeans_k = 0;          // 0 = one cluster per joint class
};

struct EvalOptionsCli {
  std::string pred_dir;
  std::string gt_dir;
  bool matched = false;
};

struct PerturbOptionsCli {
  std::string input_dir;
  double sigma = 0.06;
  int trials = 200;
  std::uint64_t seed = 0;
  int iterations = 100;
  double lr = 1e-3;
};

struct GradcheckOptionsCli {
  std::uint64_t seed = 0;
  int configs = 200;
  int points = 256;
  double step = 1e-5;
  double tolerance = 1e-4;
};

// A two-frame random scenario for finite-difference gradient validation. The
// sampling keeps every point away from loss kinks: off all limb axes, with
// flow-induced (r, z) changes bounded away from zero, and with soft
// assignment weights bounded away from zero.
struct GradScenario {
  SkeletonTopology topo;
  SequenceData seq;
  std::vector<SkeletonPose> poses;
};
GradScenario make_grad_scenario(int n_points, Rng& rng);

struct GradcheckRow {
  std::string loss;
  double max_rel_err = 0.0;
};
struct GradcheckSummary {
  std::vector<GradcheckRow> rows;
  double worst = 0.0;
};
// Checks analytic gradients of the flow, points-to-limb, symmetry, and
// joint-to-part losses plus their weighted combination against central
// finite differences over seeded random scenarios.
GradcheckSummary run_gradcheck(std::uint64_t seed, int configs, int n_points, double step);

struct PerturbTrial {
  int trial = 0;
  int sequence = 0;
  int frame = 0;  // first frame of the pair
  PerturbReport report;
};
struct PerturbSummary {
  std::vector<PerturbTrial> trials;
  double win_rate = 0.0;
  double median_reduction_pct = 0.0;  // of matched error
};
PerturbSummary run_perturb(const std::string& dataset_dir, double sigma, int trials,
                           std::uint64_t seed, int iterations, double lr);

// Command bodies behind the binary's subcommands. They write their report to
// out and return the process exit code; validation failures throw
// InvalidInput, numeric breakdowns NumericError (the binary maps these to
// exit codes 1 and 2).
int cmd_gen(const GenOptions& options, std::ostream& out);
int cmd_fit(const FitOptionsCli& options, std::ostream& out);
int cmd_eval(const EvalOptionsCli& options, std::ostream& out);
int cmd_perturb(const PerturbOptionsCli& options, std::ostream& out);
int cmd_gradcheck(const GradcheckOptionsCli& options, std::ostream& out);

}  // namespace limbfit
