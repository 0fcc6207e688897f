#include <iostream>

#include "CLI11.hpp"
#include "limbfit/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "limbfit - label-free articulated skeleton fitting on point cloud sequences.\n"
      "Exit codes: 0 ok, 1 invalid input, 2 numeric failure. LIMBFIT_THREADS caps\n"
      "worker threads."};
  app.require_subcommand(1);

  limbfit::GenOptions gen;
  CLI::App* g = app.add_subcommand(
      "gen",
      "Generate a synthetic pedestrian dataset: capsule bodies placed 6-17 m from a "
      "2650x64-beam sensor at (0,0,2) scanning elevations -15..3 deg, with exact "
      "per-point flow and part labels.");
  g->add_option("--sequences", gen.sequences, "sequence count")->capture_default_str();
  g->add_option("--frames", gen.frames, "frames per sequence, >= 2")->capture_default_str();
  g->add_option("--seed", gen.seed, "master seed")->capture_default_str();
  g->add_option("--out", gen.out_dir, "output dataset directory")->required();
  g->add_option("--augment-config", gen.augment_config_path,
                "augmentation config file (omit for clean data)");
  g->add_option("--body-config", gen.body_config_path,
                "body description file (default: built-in 13-joint body)");

  limbfit::FitOptionsCli fit;
  CLI::App* f = app.add_subcommand(
      "fit", "Fit skeletons to a dataset by minimizing the flow/limb/symmetry losses.");
  f->add_option("--input", fit.input_dir, "dataset directory")->required();
  f->add_option("--weights", fit.weights,
                "loss preset: stage2 (flow 0.02, p2l 0.01, sym 0.5, j2p 2, seg 0.5, "
                "bandwidth 0.1) or supp-demo (flow 0.2, p2l 0.1, sym 5)")
      ->capture_default_str();
  f->add_option("--iters", fit.iterations, "Adam iterations")->capture_default_str();
  f->add_option("--lr", fit.lr, "Adam learning rate")->capture_default_str();
  f->add_option("--seg", fit.seg, "segmentation route: gt | kmeans")->capture_default_str();
  f->add_option("--flow", fit.flow, "flow route: gt | nn | rigid")->capture_default_str();
  f->add_option("--out", fit.out_dir, "output directory (default: the dataset directory)");
  f->add_option("--k", fit.kmeans_k, "cluster count for --seg kmeans (0 = one per joint)")
      ->capture_default_str();

  limbfit::EvalOptionsCli ev;
  CLI::App* e = app.add_subcommand("eval", "Report joint error against ground truth.");
  e->add_option("--pred", ev.pred_dir, "prediction directory")->required();
  e->add_option("--gt", ev.gt_dir, "ground-truth dataset directory")->required();
  e->add_flag("--matched", ev.matched, "also report error after optimal joint matching");

  limbfit::PerturbOptionsCli pt;
  CLI::App* p = app.add_subcommand(
      "perturb",
      "Perturbation-recovery experiment: noise ground-truth keypoints, re-fit with the "
      "supp-demo preset, report error before and after.");
  p->add_option("--input", pt.input_dir, "dataset directory")->required();
  p->add_option("--sigma", pt.sigma, "keypoint noise sigma, meters")->capture_default_str();
  p->add_option("--trials", pt.trials, "trial count")->capture_default_str();
  p->add_option("--seed", pt.seed, "master seed")->capture_default_str();
  p->add_option("--iters", pt.iterations, "Adam iterations")->capture_default_str();
  p->add_option("--lr", pt.lr, "Adam learning rate")->capture_default_str();

  limbfit::GradcheckOptionsCli gc;
  CLI::App* c = app.add_subcommand(
      "gradcheck", "Validate analytic loss gradients against central finite differences.");
  c->add_option("--seed", gc.seed, "master seed")->capture_default_str();
  c->add_option("--configs", gc.configs, "random configurations")->capture_default_str();
  c->add_option("--points", gc.points, "points per frame")->capture_default_str();
  c->add_option("--step", gc.step, "finite-difference step")->capture_default_str();
  c->add_option("--tolerance", gc.tolerance, "max relative error allowed")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (g->parsed()) return limbfit::cmd_gen(gen, std::cout);
    if (f->parsed()) return limbfit::cmd_fit(fit, std::cout);
    if (e->parsed()) return limbfit::cmd_eval(ev, std::cout);
    if (p->parsed()) return limbfit::cmd_perturb(pt, std::cout);
    if (c->parsed()) return limbfit::cmd_gradcheck(gc, std::cout);
  } catch (const limbfit::NumericError& err) {
    std::cerr << "numeric error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
