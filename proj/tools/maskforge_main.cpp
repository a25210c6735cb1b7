/*=============================================================================
 * maskforge CLI: optimize sparse inpainting masks, reconstruct from stored
 * masks, and run the random-mask baseline.
 *===========================================================================*/
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "maskforge/pipeline.hpp"

namespace {

using namespace maskforge;

Model parse_model(const std::string& name, double eps) {
  if (name == "harmonic") return Model::harmonic();
  if (name == "biharmonic") return Model::biharmonic();
  if (name == "tv") return Model::smoothed_tv(eps);
  throw CLI::ValidationError("--model", "expected harmonic|biharmonic|tv");
}

struct CommonArgs {
  std::string input;
  std::string model = "harmonic";
  double eps = 0.01;
  std::string out_dir = ".";
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--input", a.input, "input PGM image (P2/P5)")->required();
  cmd->add_option("--model", a.model, "harmonic|biharmonic|tv")
      ->check(CLI::IsMember({"harmonic", "biharmonic", "tv"}));
  cmd->add_option("--eps", a.eps, "TV smoothing parameter");
  cmd->add_option("--out", a.out_dir, "output directory")->required();
}

int cmd_optimize(const CommonArgs& common, const std::string& algo, double lambda,
                 double density, bool have_lambda, bool have_density, double eps_t,
                 bool no_gvo, std::uint64_t seed, const SolverBudgets& budgets) {
  ExperimentConfig cfg;
  cfg.input_path = common.input;
  cfg.model = parse_model(common.model, common.eps);
  if (!algo.empty()) cfg.algo = algo == "ipiano" ? Algo::Ipiano : Algo::Sppd;
  if (have_lambda) cfg.lambda = lambda;
  if (have_density) cfg.target_density = density;
  cfg.eps_t = eps_t;
  cfg.gvo = !no_gvo;
  cfg.seed = seed;
  cfg.budgets = budgets;
  cfg.out_dir = common.out_dir;

  const ExperimentResult res = run_experiment(cfg);
  const ExperimentReport& r = res.report;
  std::printf("model=%s algo=%s lambda=%.6g\n", r.model_name.c_str(),
              r.algo_used.c_str(), r.lambda);
  std::printf("density: continuous=%.4f binarized=%.4f (%d points)\n",
              r.density_continuous, r.density_binarized, r.mask_points);
  std::printf("mse: before_gvo=%.4f after_gvo=%.4f\n", r.mse_before_gvo,
              r.mse_after_gvo);
  if (!r.calibration_warning.empty())
    std::fprintf(stderr, "warning: %s\n", r.calibration_warning.c_str());
  std::printf("artifacts written to %s\n", common.out_dir.c_str());
  return 0;
}

int cmd_inpaint(const CommonArgs& common, const std::string& mask_path, bool no_gvo) {
  const Image g = load_pgm(common.input);
  const Image mask_img = load_pgm(mask_path);
  if (mask_img.width != g.width || mask_img.height != g.height)
    throw std::invalid_argument("[inpaint] mask and image sizes differ");
  const BinaryMask mask = mask_from_image(mask_img);
  if (mask.count() == 0) throw std::invalid_argument("[inpaint] mask is empty");

  const Model model = parse_model(common.model, common.eps);
  GridOperators ops(g.width, g.height);

  Vec u;
  double err_before, err_after;
  if (no_gvo) {
    u = reconstruct_from_mask(ops, mask, g.data, model);
    err_before = err_after = mse(u, g.data);
  } else {
    GvoResult gvo = model.is_linear() ? gvo_linear(ops, mask, g.data, model.kind)
                                      : gvo_tv(ops, mask, g.data, model.eps);
    u = std::move(gvo.u);
    err_before = gvo.mse_before;
    err_after = gvo.mse_after;
  }

  namespace fs = std::filesystem;
  fs::create_directories(common.out_dir);
  const std::string stem = fs::path(common.input).stem().string();
  const std::string out = (fs::path(common.out_dir) / (stem + "_inpaint.pgm")).string();
  save_pgm(Image(g.width, g.height, u), out);
  std::printf("density=%.4f mse_before_gvo=%.4f mse_after_gvo=%.4f\n",
              mask.density(), err_before, err_after);
  std::printf("reconstruction written to %s\n", out.c_str());
  return 0;
}

int cmd_baseline(const CommonArgs& common, double density, std::uint64_t seed,
                 bool with_gvo) {
  const Image g = load_pgm(common.input);
  GridOperators ops(g.width, g.height);
  const Model model = parse_model(common.model, common.eps);
  const BaselineResult res = run_baseline(ops, g, model, density, seed, with_gvo);

  namespace fs = std::filesystem;
  fs::create_directories(common.out_dir);
  const std::string stem = fs::path(common.input).stem().string();
  save_pgm(render_mask(res.mask, g.width, g.height),
           (fs::path(common.out_dir) / (stem + "_random_mask.pgm")).string());
  save_pgm(Image(g.width, g.height, res.reconstruction),
           (fs::path(common.out_dir) / (stem + "_random_recon.pgm")).string());
  std::printf("model=%s density=%.4f seed=%llu mse=%.4f\n", model.name(), density,
              static_cast<unsigned long long>(seed), res.mse_value);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maskforge: sparse pixel masks for inpainting-based image compression"};
  app.require_subcommand(1);

  CommonArgs opt_args, inp_args, base_args;

  auto* optimize = app.add_subcommand("optimize", "optimize an inpainting mask");
  add_common(optimize, opt_args);
  std::string algo;
  double lambda = 0.0, density = 0.0, eps_t = 0.01;
  bool no_gvo = false;
  std::uint64_t seed = 0;
  SolverBudgets budgets;
  optimize->add_option("--algo", algo, "ipiano|sppd (default: per model)")
      ->check(CLI::IsMember({"ipiano", "sppd"}));
  auto* lam_opt = optimize->add_option("--lambda", lambda, "sparsity weight");
  auto* den_opt =
      optimize->add_option("--density", density, "target binarized density in (0,1]");
  lam_opt->excludes(den_opt);
  optimize->add_option("--eps-t", eps_t, "binarization threshold");
  optimize->add_flag("--no-gvo", no_gvo, "skip gray value optimization");
  optimize->add_option("--seed", seed, "RNG seed recorded in the report");
  optimize->add_option("--ipiano-iters", budgets.ipiano_max_iters, "iPiano budget");
  optimize->add_option("--sppd-outer", budgets.sppd_outer, "SPPD outer iterations");
  optimize->add_option("--sppd-inner", budgets.sppd_inner, "SPPD inner iterations");

  auto* inpaint = app.add_subcommand("inpaint", "reconstruct from a stored mask");
  add_common(inpaint, inp_args);
  std::string mask_path;
  bool inp_no_gvo = false;
  inpaint->add_option("--mask", mask_path, "mask PGM (selected pixels black)")
      ->required();
  inpaint->add_flag("--no-gvo", inp_no_gvo, "store original gray values");

  auto* baseline = app.add_subcommand("baseline", "random-mask comparison");
  add_common(baseline, base_args);
  double base_density = 0.10;
  std::uint64_t base_seed = 0;
  bool base_gvo = false;
  baseline->add_option("--density", base_density, "mask density in (0,1]");
  baseline->add_option("--seed", base_seed, "RNG seed");
  baseline->add_flag("--gvo", base_gvo, "apply gray value optimization");

  CLI11_PARSE(app, argc, argv);

  try {
    if (optimize->parsed())
      return cmd_optimize(opt_args, algo, lambda, density, lam_opt->count() > 0,
                          den_opt->count() > 0, eps_t, no_gvo, seed, budgets);
    if (inpaint->parsed()) return cmd_inpaint(inp_args, mask_path, inp_no_gvo);
    if (baseline->parsed()) return cmd_baseline(base_args, base_density, base_seed, base_gvo);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "maskforge: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
