/*=============================================================================
 * End-to-end experiment runner: lambda calibration to a target density,
 * solver dispatch, binarization, GVO, metrics, artifact writing, and the
 * random-mask baseline.
 *
 * MSE is reported on the [0,255] gray scale. Reports are byte-deterministic
 * for a fixed config and seed; wall-clock timings therefore go to a separate
 * timings file instead of the main report.
 *===========================================================================*/
#pragma once

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <limits>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gvo.hpp"
#include "ipiano.hpp"
#include "pgm_io.hpp"
#include "sppd.hpp"

namespace maskforge {

enum class Algo { Ipiano, Sppd };

inline const char* algo_name(Algo a) { return a == Algo::Ipiano ? "ipiano" : "sppd"; }

/* Per-model default from the runtime comparison in the experiments: iPiano
 * for the linear models, SPPD for smoothed TV. */
inline Algo default_algo(const Model& model) {
  return model.is_linear() ? Algo::Ipiano : Algo::Sppd;
}

/* Iteration budgets; -1 keeps the per-model defaults. */
struct SolverBudgets {
  int ipiano_max_iters = -1;
  int sppd_outer = -1;
  int sppd_inner = -1;
};

struct ExperimentConfig {
  std::string input_path;
  Model model = Model::harmonic();
  std::optional<Algo> algo;              // default: per-model choice
  std::optional<double> lambda;          // exactly one of lambda /
  std::optional<double> target_density;  // target_density must be set
  double eps_t = kDefaultBinarizeThreshold;
  bool gvo = true;
  std::uint64_t seed = 0;
  SolverBudgets budgets;
  double calibration_tol = 0.0025;  // density window, absolute fraction
  int calibration_max_probes = 12;
  std::string out_dir;   // empty: no artifacts written
  std::string run_name;  // artifact basename; defaults to the input stem

  void validate() const {
    if (lambda.has_value() == target_density.has_value())
      throw std::invalid_argument(
          "ExperimentConfig: exactly one of lambda / target_density must be set");
    if (target_density && !(*target_density > 0.0 && *target_density <= 1.0))
      throw std::invalid_argument("ExperimentConfig: target_density outside (0, 1]");
  }
};

struct PhaseTimings {
  double optimize_s = 0.0;
  double gvo_s = 0.0;
  double total_s = 0.0;
};

struct ExperimentReport {
  std::string input_name;
  int width = 0, height = 0;
  std::string model_name, algo_used;
  double tv_eps = 0.0;
  double lambda = 0.0;
  double eps_t = kDefaultBinarizeThreshold;
  std::uint64_t seed = 0;
  double density_continuous = 0.0;
  double density_binarized = 0.0;
  int mask_points = 0;
  int negative_survivors = 0;
  int iterations = 0;
  std::vector<double> energy_trace;
  double mse_before_gvo = 0.0;  // binary-mask reconstruction with x = S g
  double mse_after_gvo = 0.0;
  bool gvo_applied = false;
  std::string calibration_warning;
  PhaseTimings timings;  // kept out of report.json
};

struct ExperimentResult {
  ExperimentReport report;
  MaskField mask;       // continuous mask from the optimizer
  BinaryMask binary;
  Vec reconstruction;   // final (post-GVO when enabled)
  Vec gray_values;      // stored values at mask points
};

/* Uniformly random mask with exactly round(density * n) ones. The bounded
 * draw avoids std::uniform_int_distribution, whose output is
 * implementation-defined. */
inline BinaryMask random_mask(int n, double density, std::uint64_t seed) {
  if (!(density > 0.0 && density <= 1.0))
    throw std::invalid_argument("random_mask: density outside (0, 1]");
  const int m = static_cast<int>(std::llround(density * n));
  std::mt19937_64 rng(seed);
  auto bounded = [&rng](std::uint64_t k) {
    const std::uint64_t lim = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % k;
    std::uint64_t v;
    do { v = rng(); } while (v >= lim);
    return v % k;
  };
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = 0; i < m; ++i) {
    const int j = i + static_cast<int>(bounded(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  BinaryMask mask;
  mask.n = n;
  mask.indices.assign(idx.begin(), idx.begin() + m);
  std::sort(mask.indices.begin(), mask.indices.end());
  return mask;
}

struct OptimizeOutcome {
  MaskField mask;
  Vec u;
  std::vector<double> energy_trace;
  int iterations = 0;
};

inline OptimizeOutcome optimize_mask(const GridOperators& ops, const Image& g,
                                     const Model& model, Algo algo, double lambda,
                                     const SolverBudgets& budgets) {
  OptimizeOutcome out;
  if (lambda == 0.0) {
    // c = 1 is optimal: every pixel kept, exact reconstruction.
    out.mask = MaskField::ones(g.size());
    out.u = g.data;
    out.energy_trace = {0.0};
    return out;
  }
  if (algo == Algo::Ipiano) {
    IpianoParams p = IpianoParams::defaults_for(model, lambda);
    if (budgets.ipiano_max_iters > 0) p.max_iters = budgets.ipiano_max_iters;
    IpianoResult r = ipiano_run(ops, g, p, model);
    out.mask = std::move(r.mask);
    out.u = std::move(r.u);
    out.energy_trace = std::move(r.energy_trace);
    out.iterations = r.iters;
  } else {
    SppdParams p = SppdParams::defaults_for(model, lambda);
    if (budgets.sppd_outer > 0) p.outer_iters = budgets.sppd_outer;
    if (budgets.sppd_inner > 0) p.inner_iters = budgets.sppd_inner;
    SppdResult r = sppd_run(ops, g, p, model);
    out.mask = std::move(r.mask);
    out.u = std::move(r.u);
    out.energy_trace = std::move(r.energy_trace);
    out.iterations = r.outer_done + 1;
  }
  return out;
}

struct CalibrationResult {
  double lambda = 0.0;
  double achieved_density = 0.0;  // binarized
  OptimizeOutcome outcome;
  std::vector<std::pair<double, double>> probes;  // (lambda, density)
  std::string warning;
};

/* Bisection on log(lambda) against the binarized density, which is assumed
 * (and monitored) to be non-increasing in lambda. */
inline CalibrationResult calibrate_lambda(const GridOperators& ops, const Image& g,
                                          const Model& model, Algo algo,
                                          double target_density,
                                          const SolverBudgets& budgets = {},
                                          double eps_t = kDefaultBinarizeThreshold,
                                          double tol_density = 0.0025,
                                          int max_probes = 12) {
  CalibrationResult res;
  if (target_density >= 1.0) {
    res.lambda = 0.0;
    res.outcome = optimize_mask(ops, g, model, algo, 0.0, budgets);
    res.achieved_density = 1.0;
    res.probes.emplace_back(0.0, 1.0);
    return res;
  }

  auto probe = [&](double lambda) {
    OptimizeOutcome oc = optimize_mask(ops, g, model, algo, lambda, budgets);
    const double d = binarize(oc.mask.c, eps_t).density();
    res.probes.emplace_back(lambda, d);
    const bool best = res.probes.size() == 1 ||
                      std::abs(d - target_density) <
                          std::abs(res.achieved_density - target_density);
    if (best) {
      res.lambda = lambda;
      res.achieved_density = d;
      res.outcome = std::move(oc);
    }
    return d;
  };

  double lam = 0.003;  // sensible starting scale for [0,1] intensities
  double d = probe(lam);
  double lam_lo = lam, d_lo = d;  // lo: density above target
  double lam_hi = lam, d_hi = d;  // hi: density below target
  bool have_lo = d > target_density, have_hi = d < target_density;

  // Expand geometrically until the target is bracketed.
  while (!(have_lo && have_hi) &&
         static_cast<int>(res.probes.size()) < max_probes &&
         std::abs(d - target_density) > tol_density) {
    lam = have_lo ? lam * 4.0 : lam / 4.0;
    d = probe(lam);
    if (d > target_density) {
      if (have_lo && lam > lam_lo && d > d_lo + 1e-12)
        res.warning = "NonMonotoneDensity: density increased with lambda";
      lam_lo = lam; d_lo = d; have_lo = true;
    } else {
      lam_hi = lam; d_hi = d; have_hi = true;
    }
  }

  while (std::abs(res.achieved_density - target_density) > tol_density &&
         static_cast<int>(res.probes.size()) < max_probes && have_lo && have_hi) {
    lam = std::sqrt(lam_lo * lam_hi);
    d = probe(lam);
    if (d > target_density) {
      lam_lo = lam;
    } else {
      lam_hi = lam;
    }
  }
  if (std::abs(res.achieved_density - target_density) > tol_density &&
      res.warning.empty())
    res.warning = "CalibrationIncomplete: probe budget exhausted, returning best";
  return res;
}

/* Selected pixels rendered black on white. */
inline Image render_mask(const BinaryMask& mask, int width, int height) {
  Image img(width, height, Vec::Ones(static_cast<Eigen::Index>(width) * height));
  for (int i : mask.indices) img.data[i] = 0.0;
  return img;
}

/* Reads a rendered mask back: black (< 0.5) means selected. */
inline BinaryMask mask_from_image(const Image& img) {
  BinaryMask m;
  m.n = img.size();
  for (Eigen::Index i = 0; i < img.data.size(); ++i)
    if (img.data[i] < 0.5) m.indices.push_back(static_cast<int>(i));
  return m;
}

namespace detail {

/* Pipeline errors carry the phase they surfaced in. */
template <class Fn>
auto phase(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("[phase ") + name + "] " + e.what());
  }
}

inline nlohmann::json report_to_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["input"] = r.input_name;
  j["width"] = r.width;
  j["height"] = r.height;
  j["model"] = r.model_name;
  j["algo"] = r.algo_used;
  j["tv_eps"] = r.tv_eps;
  j["lambda"] = r.lambda;
  j["eps_t"] = r.eps_t;
  j["seed"] = r.seed;
  j["density_continuous"] = r.density_continuous;
  j["density_binarized"] = r.density_binarized;
  j["mask_points"] = r.mask_points;
  j["negative_survivors"] = r.negative_survivors;
  j["iterations"] = r.iterations;
  j["mse_before_gvo"] = r.mse_before_gvo;
  j["mse_after_gvo"] = r.mse_after_gvo;
  j["gvo_applied"] = r.gvo_applied;
  j["calibration_warning"] = r.calibration_warning;
  j["final_energy"] = r.energy_trace.empty() ? 0.0 : r.energy_trace.back();
  return j;
}

inline void append_ledger_row(const std::filesystem::path& path,
                              const ExperimentReport& r) {
  static std::mutex ledger_mutex;
  const std::lock_guard<std::mutex> lock(ledger_mutex);
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path.string());
  if (fresh)
    out << "run,model,algo,lambda,density_binarized,mse_before_gvo,mse_after_gvo\n";
  out << r.input_name << ',' << r.model_name << ',' << r.algo_used << ','
      << nlohmann::json(r.lambda).dump() << ','
      << nlohmann::json(r.density_binarized).dump() << ','
      << nlohmann::json(r.mse_before_gvo).dump() << ','
      << nlohmann::json(r.mse_after_gvo).dump() << '\n';
}

inline void write_artifacts(const ExperimentConfig& cfg, const ExperimentResult& res,
                            const Image& g) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  const std::string base = res.report.input_name;

  save_pgm(render_mask(res.binary, g.width, g.height),
           (dir / (base + "_mask.pgm")).string());
  save_pgm(Image(g.width, g.height, res.reconstruction),
           (dir / (base + "_recon.pgm")).string());

  std::ofstream rep(dir / (base + "_report.json"));
  rep << detail::report_to_json(res.report).dump(2) << '\n';

  std::ofstream trace(dir / (base + "_trace.csv"));
  trace << "iter,energy\n";
  for (size_t i = 0; i < res.report.energy_trace.size(); ++i)
    trace << i << ',' << nlohmann::json(res.report.energy_trace[i]).dump() << '\n';

  nlohmann::json t;
  t["optimize_s"] = res.report.timings.optimize_s;
  t["gvo_s"] = res.report.timings.gvo_s;
  t["total_s"] = res.report.timings.total_s;
  std::ofstream tim(dir / (base + "_timings.json"));
  tim << t.dump(2) << '\n';

  append_ledger_row(dir / "ledger.csv", res.report);
}

}  // namespace detail

/* Full pipeline on an in-memory image: (calibrate | fixed lambda) ->
 * optimize mask -> binarize -> GVO -> reconstruct -> report. */
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Image& g,
                                       const std::string& input_name = "image") {
  using clock = std::chrono::steady_clock;
  cfg.validate();
  const auto t0 = clock::now();
  auto seconds_since = [](clock::time_point start) {
    return std::chrono::duration<double>(clock::now() - start).count();
  };

  GridOperators ops(g.width, g.height);
  const Model& model = cfg.model;
  const Algo algo = cfg.algo.value_or(default_algo(model));

  ExperimentResult res;
  ExperimentReport& rep = res.report;
  rep.input_name = cfg.run_name.empty() ? input_name : cfg.run_name;
  rep.width = g.width;
  rep.height = g.height;
  rep.model_name = model.name();
  rep.algo_used = algo_name(algo);
  rep.tv_eps = model.is_linear() ? 0.0 : model.eps;
  rep.eps_t = cfg.eps_t;
  rep.seed = cfg.seed;

  OptimizeOutcome outcome = detail::phase("optimize", [&] {
    if (cfg.lambda) {
      rep.lambda = *cfg.lambda;
      return optimize_mask(ops, g, model, algo, *cfg.lambda, cfg.budgets);
    }
    CalibrationResult cal = calibrate_lambda(
        ops, g, model, algo, *cfg.target_density, cfg.budgets, cfg.eps_t,
        cfg.calibration_tol, cfg.calibration_max_probes);
    rep.lambda = cal.lambda;
    rep.calibration_warning = cal.warning;
    return std::move(cal.outcome);
  });
  rep.timings.optimize_s = seconds_since(t0);
  rep.iterations = outcome.iterations;
  rep.energy_trace = std::move(outcome.energy_trace);

  res.mask = std::move(outcome.mask);
  res.binary = binarize(res.mask.c, cfg.eps_t);
  rep.density_continuous = res.mask.density(0.0);
  rep.density_binarized = res.binary.density();
  rep.mask_points = res.binary.count();
  rep.negative_survivors = res.binary.negative_survivors;

  const auto t_gvo = clock::now();
  detail::phase("reconstruct", [&] {
    if (res.binary.count() == 0) {
      // Nothing survives binarization (very large lambda): best constant.
      res.reconstruction = Vec::Constant(g.size(), g.data.mean());
      res.gray_values = Vec();
      rep.mse_before_gvo = mse(res.reconstruction, g.data);
      rep.mse_after_gvo = rep.mse_before_gvo;
    } else if (cfg.gvo) {
      GvoResult gvo = model.is_linear()
                          ? gvo_linear(ops, res.binary, g.data, model.kind)
                          : gvo_tv(ops, res.binary, g.data, model.eps);
      rep.mse_before_gvo = gvo.mse_before;
      rep.mse_after_gvo = gvo.mse_after;
      rep.gvo_applied = true;
      res.reconstruction = std::move(gvo.u);
      res.gray_values = std::move(gvo.x);
    } else {
      res.reconstruction = reconstruct_from_mask(ops, res.binary, g.data, model);
      res.gray_values = res.binary.gather(g.data);
      rep.mse_before_gvo = mse(res.reconstruction, g.data);
      rep.mse_after_gvo = rep.mse_before_gvo;
    }
  });
  rep.timings.gvo_s = seconds_since(t_gvo);
  rep.timings.total_s = seconds_since(t0);

  if (!cfg.out_dir.empty())
    detail::phase("write", [&] { detail::write_artifacts(cfg, res, g); });
  return res;
}

/* Loads the input image from cfg.input_path. */
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.input_path.empty())
    throw std::invalid_argument("run_experiment: input_path not set");
  const Image g = detail::phase("load", [&] { return load_pgm(cfg.input_path); });
  const std::string stem = std::filesystem::path(cfg.input_path).stem().string();
  return run_experiment(cfg, g, stem);
}

/* Random-mask baseline: reconstruct from a uniformly random mask at the
 * given density, with optional GVO. */
struct BaselineResult {
  BinaryMask mask;
  Vec reconstruction;
  double mse_value = 0.0;
};

inline BaselineResult run_baseline(const GridOperators& ops, const Image& g,
                                   const Model& model, double density,
                                   std::uint64_t seed, bool gvo_on = false) {
  BaselineResult out;
  out.mask = random_mask(g.size(), density, seed);
  if (gvo_on) {
    GvoResult gvo = model.is_linear()
                        ? gvo_linear(ops, out.mask, g.data, model.kind)
                        : gvo_tv(ops, out.mask, g.data, model.eps);
    out.reconstruction = std::move(gvo.u);
    out.mse_value = gvo.mse_after;
  } else {
    out.reconstruction = reconstruct_from_mask(ops, out.mask, g.data, model);
    out.mse_value = mse(out.reconstruction, g.data);
  }
  return out;
}

}  // namespace maskforge
