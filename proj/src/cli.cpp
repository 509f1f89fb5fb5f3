#include "lrs/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lrs/adapt.hpp"
#include "lrs/config.hpp"
#include "lrs/datagen.hpp"
#include "lrs/dp.hpp"
#include "lrs/errors.hpp"
#include "lrs/eval.hpp"
#include "lrs/io.hpp"
#include "lrs/solver_amht.hpp"
#include "lrs/solver_rank1.hpp"

namespace lrs {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

// Offset between the training and test sample seeds of a sweep point.
constexpr std::uint64_t kTestSeedOffset = 1'000'003;

template <class T>
CLI::Option* optional_flag(CLI::App* app, const std::string& name, std::optional<T>& slot,
                           const std::string& help) {
  return app->add_option_function<T>(name, [&slot](const T& v) { slot = v; }, help);
}

struct GenFlags {
  std::optional<int> d, r, t, m, k, zeta;
  std::optional<double> sigma;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> support, weights;

  void attach(CLI::App* app) {
    optional_flag(app, "--d", d, "Dimension");
    optional_flag(app, "--r", r, "Rank of the shared subspace");
    optional_flag(app, "--t", t, "Number of tasks");
    optional_flag(app, "--m", m, "Samples per task");
    optional_flag(app, "--k", k, "Nonzeros per sparse correction");
    optional_flag(app, "--zeta", zeta, "Nonzeros per row of the sparse part");
    optional_flag(app, "--sigma", sigma, "Response noise level");
    optional_flag(app, "--seed", seed, "Seed of the planted model");
    optional_flag(app, "--support", support, "exact or capped")
        ->check(CLI::IsMember({"exact", "capped"}));
    optional_flag(app, "--weights", weights, "gaussian or ones")
        ->check(CLI::IsMember({"gaussian", "ones"}));
  }

  void apply(GenConfig& g) const {
    if (d) g.d = *d;
    if (r) g.r = *r;
    if (t) g.t = *t;
    if (m) g.m = *m;
    if (k) g.k = *k;
    if (zeta) g.zeta = *zeta;
    if (sigma) g.sigma = *sigma;
    if (seed) g.seed = *seed;
    if (support) g.support = *support == "exact" ? SupportMode::exact : SupportMode::capped;
    if (weights) g.weights = *weights == "ones" ? WeightMode::ones : WeightMode::gaussian;
  }
};

struct SolverFlags {
  std::optional<int> r, k, iters, inner_cap;
  std::optional<double> eps, c1, c3, c4, c5, ridge;
  std::optional<std::string> batching;

  void attach(CLI::App* app) {
    optional_flag(app, "--r", r, "Rank of the fitted subspace");
    optional_flag(app, "--k", k, "Sparsity budget per task (default: from truth.json)");
    optional_flag(app, "--iters", iters, "Outer iterations");
    optional_flag(app, "--inner-cap", inner_cap, "Cap on inner thresholding rounds");
    optional_flag(app, "--eps", eps, "Target accuracy of the inner loop");
    optional_flag(app, "--c1", c1, "Threshold constant");
    optional_flag(app, "--c3", c3, "Decay of the error bound");
    optional_flag(app, "--c4", c4, "Decay of the subspace term");
    optional_flag(app, "--c5", c5, "Decay of the weight term");
    optional_flag(app, "--ridge", ridge, "Ridge added to the w solve");
    optional_flag(app, "--batching", batching, "reuse or split")
        ->check(CLI::IsMember({"reuse", "split"}));
  }

  void apply(SolverConfig& s) const {
    if (r) s.r = *r;
    if (k) s.k = *k;
    if (iters) s.outer_iters = *iters;
    if (inner_cap) s.inner_cap = *inner_cap;
    if (eps) s.eps = *eps;
    if (c1) s.c1 = *c1;
    if (c3) s.c3 = *c3;
    if (c4) s.c4 = *c4;
    if (c5) s.c5 = *c5;
    if (ridge) s.ridge_eps = *ridge;
    if (batching) s.batching = *batching == "split" ? Batching::split : Batching::reuse;
  }
};

struct PrivacyFlags {
  std::optional<double> epsilon, delta, sigma_dp, a1, a2, a3, aw;
  std::optional<std::uint64_t> noise_seed;
  double clip_quantile = 0.999;

  void attach(CLI::App* app) {
    optional_flag(app, "--epsilon", epsilon, "Privacy budget epsilon");
    optional_flag(app, "--delta", delta, "Privacy budget delta");
    optional_flag(app, "--sigma-dp", sigma_dp, "Noise multiplier (default: calibrated)");
    optional_flag(app, "--a1", a1, "Clip level of covariates");
    optional_flag(app, "--a2", a2, "Clip level of responses");
    optional_flag(app, "--a3", a3, "Clip level of x^T b");
    optional_flag(app, "--aw", aw, "Clip level of task weights");
    optional_flag(app, "--noise-seed", noise_seed, "Seed of the privacy noise");
    app->add_option("--clip-quantile", clip_quantile,
                    "Quantile for data-driven clip levels when none are given")
        ->check(CLI::Range(0.0, 1.0));
  }
};

struct Common {
  std::optional<std::string> config;
  std::optional<std::string> out;
};

ExperimentConfig load_or_default(const Common& c) {
  if (c.config) return load_config(*c.config);
  return ExperimentConfig{};
}

void revalidate(const ExperimentConfig& cfg) {
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

fs::path output_dir(const Common& c, const ExperimentConfig& cfg) {
  return c.out ? fs::path(*c.out) : cfg.output_dir;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Fills in r and k when neither flags nor the config set them.
void resolve_rank_and_sparsity(SolverConfig& s, const SolverFlags& f, bool have_config,
                               const DatasetBundle& data) {
  if (!f.r && !have_config) {
    if (data.truth) s.r = static_cast<int>(data.truth->rank());
    else if (data.meta.r) s.r = *data.meta.r;
  }
  if (!f.k && s.k == 0) {
    if (!data.truth) throw ConfigError("fit: sparsity budget k not set (use --k or solver.k)");
    s.k = data.truth->k;
  }
  if (s.r > data.meta.d) {
    throw ConfigError("fit: invariant r <= d violated (r=" + std::to_string(s.r) +
                      ", d=" + std::to_string(data.meta.d) + ")");
  }
  if (s.k > data.meta.d) {
    throw ConfigError("fit: invariant k <= d violated (k=" + std::to_string(s.k) +
                      ", d=" + std::to_string(data.meta.d) + ")");
  }
}

void print_record(std::ostream& out, const IterationRecord& rec) {
  out << "iter " << rec.iteration << "  train_mse " << fmt(rec.train_mse);
  if (!std::isnan(rec.subspace_dist)) out << "  subspace_dist " << fmt(rec.subspace_dist);
  out << "  max_nnz " << rec.max_nonzeros << "\n";
}

ClipLevels resolve_clips(const ExperimentConfig& cfg, const PrivacyFlags& f,
                         std::span<const TaskDataset> data) {
  ClipLevels levels;
  if (cfg.clips_given) {
    levels = {cfg.privacy.a1, cfg.privacy.a2, cfg.privacy.a3, cfg.privacy.aw};
  } else {
    levels = fallback_clip_levels(data, f.clip_quantile);
  }
  if (f.a1) levels.a1 = *f.a1;
  if (f.a2) levels.a2 = *f.a2;
  if (f.a3) levels.a3 = *f.a3;
  if (f.aw) levels.aw = *f.aw;
  return levels;
}

// ---- gen ----

int cmd_gen(const Common& c, const GenFlags& gf, std::optional<std::uint64_t> sample_seed,
            std::optional<int> sample_m, std::ostream& out) {
  ExperimentConfig cfg = load_or_default(c);
  gf.apply(cfg.gen);
  revalidate(cfg);
  const fs::path dir = c.out ? fs::path(*c.out) : cfg.output_dir / "data";
  ensure_writable_dir(dir);

  DatasetBundle bundle;
  GroundTruth gt = gen_ground_truth(cfg.gen);
  const int m = sample_m.value_or(cfg.gen.m);
  bundle.tasks = gen_samples(gt, m, sample_seed.value_or(cfg.gen.seed));
  bundle.meta.d = cfg.gen.d;
  bundle.meta.r = cfg.gen.r;
  bundle.meta.t = cfg.gen.t;
  bundle.meta.m = m;
  bundle.meta.sigma = cfg.gen.sigma;
  bundle.meta.seed = cfg.gen.seed;
  bundle.truth = std::move(gt);
  write_bundle(dir, bundle);
  out << "wrote " << cfg.gen.t << " tasks x " << m << " samples (d=" << cfg.gen.d
      << ") to " << dir.string() << "\n";
  return kExitOk;
}

// ---- fit ----

int cmd_fit(const Common& c, const SolverFlags& sf, const std::string& data_dir, bool no_truth,
            bool quiet, std::ostream& out) {
  ExperimentConfig cfg = load_or_default(c);
  sf.apply(cfg.solver);
  revalidate(cfg);
  const DatasetBundle data = read_bundle(data_dir);
  resolve_rank_and_sparsity(cfg.solver, sf, c.config.has_value(), data);
  const fs::path dir = output_dir(c, cfg);
  ensure_writable_dir(dir);

  FitOptions opts;
  if (data.truth && !no_truth) opts.truth = &*data.truth;
  if (!quiet) opts.on_iteration = [&out](const IterationRecord& r) { print_record(out, r); };
  const FitResult res = fit(data.tasks, cfg.solver, opts);

  write_model(dir / "model.json", ModelFile{res.state, cfg.solver.k, std::nullopt, std::nullopt});
  write_metrics(dir / "metrics.csv", res.report);
  out << "train_rmse " << fmt(rmse(res.state, data.tasks)) << "\n";
  out << "wrote " << (dir / "model.json").string() << " and " << (dir / "metrics.csv").string()
      << "\n";
  return kExitOk;
}

int cmd_fit_rank1(const Common& c, std::optional<int> k, std::optional<int> iters,
                  std::optional<double> c1, std::optional<double> c2, std::optional<double> c3,
                  const std::string& data_dir, bool no_truth, bool quiet, std::ostream& out) {
  ExperimentConfig cfg = load_or_default(c);
  if (iters) cfg.rank1.iters = *iters;
  if (c1) cfg.rank1.c1 = *c1;
  if (c2) cfg.rank1.c2 = *c2;
  if (c3) cfg.rank1.c3 = *c3;
  const DatasetBundle data = read_bundle(data_dir);
  if (k) cfg.rank1.k = *k;
  else if (!c.config && data.truth) cfg.rank1.k = data.truth->k;
  revalidate(cfg);
  if (cfg.rank1.k > data.meta.d) {
    throw ConfigError("fit-rank1: invariant k <= d violated (k=" + std::to_string(cfg.rank1.k) +
                      ", d=" + std::to_string(data.meta.d) + ")");
  }
  const fs::path dir = output_dir(c, cfg);
  ensure_writable_dir(dir);

  Rank1Options opts;
  if (data.truth && !no_truth) opts.truth = &*data.truth;
  if (!quiet) opts.on_iteration = [&out](const IterationRecord& r) { print_record(out, r); };
  const Rank1Result res = fit_rank1(data.tasks, cfg.rank1, opts);
  const ModelState state = to_model_state(res);

  write_model(dir / "model.json", ModelFile{state, cfg.rank1.k, std::nullopt, std::nullopt});
  write_metrics(dir / "metrics.csv", res.report);
  out << "train_rmse " << fmt(rmse(state, data.tasks)) << "\n";
  out << "wrote " << (dir / "model.json").string() << " and " << (dir / "metrics.csv").string()
      << "\n";
  return kExitOk;
}

int cmd_fit_dp(const Common& c, const SolverFlags& sf, const PrivacyFlags& pf,
               const std::string& data_dir, bool no_truth, bool quiet, std::ostream& out) {
  ExperimentConfig cfg = load_or_default(c);
  sf.apply(cfg.solver);
  auto& p = cfg.privacy;
  if (pf.epsilon) p.epsilon = *pf.epsilon;
  if (pf.delta) p.delta = *pf.delta;
  if (sf.iters || !c.config) p.planned_iters = cfg.solver.outer_iters;
  if (pf.sigma_dp) {
    p.sigma_dp = *pf.sigma_dp;
  } else if (pf.epsilon || pf.delta || !cfg.sigma_dp_given) {
    if (!(p.epsilon > 0.0) || !(p.delta > 0.0) || !(p.delta < 1.0)) {
      throw ConfigError("fit-dp: invariant epsilon > 0 and 0 < delta < 1 violated");
    }
    p.sigma_dp = calibrate_noise(p.epsilon, p.delta);
  }
  const DatasetBundle data = read_bundle(data_dir);
  resolve_rank_and_sparsity(cfg.solver, sf, c.config.has_value(), data);
  apply_clip_levels(p, resolve_clips(cfg, pf, data.tasks));
  revalidate(cfg);
  const fs::path dir = output_dir(c, cfg);
  ensure_writable_dir(dir);

  out << "sigma_dp " << fmt(p.sigma_dp) << "  clips a1 " << fmt(p.a1) << " a2 " << fmt(p.a2)
      << " a3 " << fmt(p.a3) << " aw " << fmt(p.aw) << "\n";
  FitOptions opts;
  if (data.truth && !no_truth) opts.truth = &*data.truth;
  if (!quiet) opts.on_iteration = [&out](const IterationRecord& r) { print_record(out, r); };
  const double delta = p.delta;
  auto on_release = [&out, delta](const PrivacyLedger& ledger) {
    const auto& last = ledger.releases().back();
    out << "release " << ledger.releases().size() << "/" << ledger.planned() << "  rho "
        << fmt(last.rho) << "  rho_total " << fmt(ledger.rho_total()) << "  epsilon@delta "
        << fmt(ledger.epsilon_at(delta)) << "\n";
  };
  const PrivateFitResult res =
      fit_private(data.tasks, cfg.solver, p, opts, pf.noise_seed.value_or(0), on_release);

  write_model(dir / "model.json", ModelFile{res.state, cfg.solver.k, res.ledger, delta});
  write_metrics(dir / "metrics.csv", res.report);
  write_ledger(dir / "ledger.json", res.ledger, delta);
  out << "train_rmse " << fmt(rmse(res.state, data.tasks)) << "\n";
  out << "wrote " << (dir / "model.json").string() << ", " << (dir / "metrics.csv").string()
      << " and " << (dir / "ledger.json").string() << "\n";
  return kExitOk;
}

// ---- adapt ----

GroundTruth task_truth(const GroundTruth& gt, std::size_t i) {
  GroundTruth one;
  one.u_star = gt.u_star;
  one.w_star = gt.w_star.row(static_cast<Eigen::Index>(i));
  one.b_star = gt.b_star.col(static_cast<Eigen::Index>(i));
  one.sigma = gt.sigma;
  one.k = gt.k;
  one.zeta = std::min(gt.zeta, 1);
  return one;
}

struct AdaptFlags {
  std::optional<int> k, iters;
  std::optional<double> noise_floor, ridge;
  bool oracle = false;
};

int cmd_adapt(const Common& c, const AdaptFlags& af, const std::string& model_path,
              const std::string& data_dir, std::ostream& out) {
  ExperimentConfig cfg = load_or_default(c);
  const ModelFile model = read_model(model_path);
  const DatasetBundle data = read_bundle(data_dir);
  AdaptConfig acfg = cfg.adapt;
  if (af.k) acfg.k = *af.k;
  else if (acfg.k == 0) acfg.k = model.k;
  if (af.iters) acfg.iters = *af.iters;
  if (af.noise_floor) acfg.noise_floor = *af.noise_floor;
  if (af.ridge) acfg.ridge = *af.ridge;
  acfg.oracle_schedule = af.oracle;
  revalidate(cfg);
  if (static_cast<int>(model.state.dim()) != data.meta.d) {
    throw FormatError("adapt: model has d=" + std::to_string(model.state.dim()) +
                      " but the dataset has d=" + std::to_string(data.meta.d));
  }
  if (acfg.k > data.meta.d) {
    throw ConfigError("adapt: invariant k <= d violated (k=" + std::to_string(acfg.k) + ")");
  }
  if (acfg.oracle_schedule && !data.truth) {
    throw ConfigError("adapt: --oracle needs truth.json in the new-task bundle");
  }
  const fs::path dir = output_dir(c, cfg);
  ensure_writable_dir(dir);

  Json tasks = Json::array();
  double gap_sum = 0.0;
  for (std::size_t i = 0; i < data.tasks.size(); ++i) {
    std::optional<GroundTruth> one;
    if (data.truth) one = task_truth(*data.truth, i);
    const AdaptResult res =
        adapt_new_task(data.tasks[i], model.state.u, acfg, one ? &*one : nullptr);
    Json entry;
    entry["task"] = i;
    entry["w"] = std::vector<double>(res.w.data(), res.w.data() + res.w.size());
    Json b = Json::array();
    for (Eigen::Index j = 0; j < res.b.size(); ++j) {
      if (res.b(j) != 0.0) b.push_back(Json::array({j, res.b(j)}));
    }
    entry["b"] = std::move(b);
    if (!std::isnan(res.gap)) {
      entry["gap"] = res.gap;
      gap_sum += res.gap;
    }
    out << "task " << i << "  train_rmse "
        << fmt(rmse(Matrix(model.state.u * res.w + res.b), std::span(&data.tasks[i], 1)));
    if (!std::isnan(res.gap)) out << "  gap " << fmt(res.gap);
    out << "\n";
    tasks.push_back(std::move(entry));
  }
  if (data.truth) out << "mean_gap " << fmt(gap_sum / static_cast<double>(data.tasks.size())) << "\n";
  Json doc;
  doc["version"] = kFormatVersion;
  doc["k"] = acfg.k;
  doc["tasks"] = std::move(tasks);
  write_text(dir / "adapt.json", doc.dump(2) + "\n");
  out << "wrote " << (dir / "adapt.json").string() << "\n";
  return kExitOk;
}

// ---- eval ----

int cmd_eval(const Common& c, const std::string& model_path, const std::string& data_dir,
             const std::optional<std::string>& test_dir, bool baselines,
             const std::optional<std::string>& csv_path, std::ostream& out) {
  ExperimentConfig cfg = load_or_default(c);
  const ModelFile model = read_model(model_path);
  const DatasetBundle train = read_bundle(data_dir);
  std::optional<DatasetBundle> test;
  if (test_dir) test = read_bundle(*test_dir);
  const auto check = [&](const DatasetBundle& b, const std::string& which) {
    if (static_cast<int>(model.state.dim()) != b.meta.d ||
        static_cast<int>(model.state.tasks()) != b.meta.t) {
      throw FormatError("eval: model is d=" + std::to_string(model.state.dim()) +
                        ", t=" + std::to_string(model.state.tasks()) + " but the " + which +
                        " bundle is d=" + std::to_string(b.meta.d) +
                        ", t=" + std::to_string(b.meta.t));
    }
  };
  check(train, "training");
  if (test) check(*test, "test");

  std::vector<std::pair<std::string, double>> rows;
  rows.emplace_back("train_rmse", rmse(model.state, train.tasks));
  if (test) rows.emplace_back("test_rmse", rmse(model.state, test->tasks));
  if (train.truth && train.truth->rank() == model.state.rank()) {
    const RecoveryErrors e = recovery_errors(model.state, *train.truth);
    rows.emplace_back("subspace_dist", e.subspace_dist);
    rows.emplace_back("max_b_inf", e.max_b_inf);
    rows.emplace_back("max_theta_l2", e.max_theta_l2);
    rows.emplace_back("support_precision", e.support_precision);
    rows.emplace_back("support_recall", e.support_recall);
  }
  if (model.ledger && model.ledger_delta) {
    rows.emplace_back("privacy_rho", model.ledger->rho_total());
    rows.emplace_back("privacy_epsilon", model.ledger->epsilon_at(*model.ledger_delta));
  }
  if (baselines || cfg.baselines) {
    const auto& scored = test ? test->tasks : train.tasks;
    const std::string suffix = test ? "_test_rmse" : "_train_rmse";
    rows.emplace_back("single" + suffix,
                      rmse(replicate(baseline_single(train.tasks), train.tasks.size()), scored));
    rows.emplace_back("full_finetune" + suffix, rmse(baseline_full_finetune(train.tasks), scored));
    SolverConfig rep = cfg.solver;
    rep.r = static_cast<int>(model.state.rank());
    rep.k = 0;
    FitOptions opts;
    if (train.truth && train.truth->rank() == model.state.rank()) opts.truth = &*train.truth;
    rows.emplace_back("rep_only" + suffix,
                      rmse(baseline_rep_only(train.tasks, rep, opts).state, scored));
  }

  std::size_t width = 0;
  for (const auto& [name, _] : rows) width = std::max(width, name.size());
  for (const auto& [name, value] : rows) {
    out << std::left << std::setw(static_cast<int>(width + 2)) << name << fmt(value) << "\n";
  }
  if (csv_path) {
    std::string text = "metric,value\n";
    for (const auto& [name, value] : rows) text += name + "," + format_double(value) + "\n";
    write_text(*csv_path, text);
  }
  return kExitOk;
}

// ---- sweep ----

int integral(double v, const std::string& param) {
  if (v != std::round(v)) {
    throw ConfigError("sweep: value " + fmt(v) + " of '" + param + "' must be an integer");
  }
  return static_cast<int>(v);
}

ExperimentConfig sweep_point(ExperimentConfig cfg, const std::string& param, double v) {
  if (cfg.solver.k == 0) cfg.solver.k = cfg.gen.k;
  if (param == "epsilon") {
    cfg.privacy.epsilon = v;
    cfg.privacy.sigma_dp = calibrate_noise(v, cfg.privacy.delta);
  } else if (param == "k") {
    cfg.gen.k = cfg.solver.k = integral(v, param);
  } else if (param == "sparsity") {
    cfg.gen.k = cfg.solver.k = static_cast<int>(std::lround(v / 100.0 * cfg.gen.d));
  } else if (param == "sigma") {
    cfg.gen.sigma = v;
  } else if (param == "m") {
    cfg.gen.m = integral(v, param);
  } else if (param == "t") {
    cfg.gen.t = integral(v, param);
  } else if (param == "r") {
    cfg.gen.r = cfg.solver.r = integral(v, param);
  }
  cfg.rank1.k = cfg.gen.k;
  cfg.privacy.planned_iters = cfg.solver.outer_iters;
  revalidate(cfg);
  return cfg;
}

struct PointMetrics {
  double rmse = 0.0;
  double subspace_dist = 0.0;
  double max_b_inf = 0.0;
  double epsilon_spent = std::numeric_limits<double>::quiet_NaN();
  double nonprivate_rmse = std::numeric_limits<double>::quiet_NaN();
  double single = 0.0, finetune = 0.0, rep = 0.0;
};

PointMetrics run_point(const ExperimentConfig& cfg, std::uint64_t seed) {
  GenConfig g = cfg.gen;
  g.seed = seed;
  const GroundTruth gt = gen_ground_truth(g);
  const auto train = gen_samples(gt, g.m, seed);
  const auto test = gen_samples(gt, cfg.sweep->test_m, seed + kTestSeedOffset);
  FitOptions opts;
  opts.truth = &gt;

  PointMetrics pm;
  ModelState state;
  switch (cfg.sweep->mode) {
    case SweepMode::fit:
      state = fit(train, cfg.solver, opts).state;
      break;
    case SweepMode::fit_rank1: {
      Rank1Options r1;
      r1.truth = &gt;
      state = to_model_state(fit_rank1(train, cfg.rank1, r1));
      break;
    }
    case SweepMode::fit_dp: {
      PrivacyConfig p = cfg.privacy;
      ClipLevels levels = cfg.clips_given ? ClipLevels{p.a1, p.a2, p.a3, p.aw}
                                          : fallback_clip_levels(train);
      apply_clip_levels(p, levels);
      const PrivateFitResult res = fit_private(train, cfg.solver, p, opts, seed);
      state = res.state;
      pm.epsilon_spent = res.ledger.epsilon_at(p.delta);
      pm.nonprivate_rmse = rmse(fit(train, cfg.solver, opts).state, test);
      break;
    }
  }
  pm.rmse = rmse(state, test);
  if (state.rank() == gt.rank()) {
    const RecoveryErrors e = recovery_errors(state, gt);
    pm.subspace_dist = e.subspace_dist;
    pm.max_b_inf = e.max_b_inf;
  } else {
    pm.subspace_dist = pm.max_b_inf = std::numeric_limits<double>::quiet_NaN();
  }
  if (cfg.baselines) {
    pm.single = rmse(replicate(baseline_single(train), train.size()), test);
    pm.finetune = rmse(baseline_full_finetune(train), test);
    SolverConfig rep = cfg.solver;
    rep.k = 0;
    pm.rep = rmse(baseline_rep_only(train, rep, opts).state, test);
  }
  return pm;
}

int cmd_sweep(const Common& c, std::ostream& out) {
  if (!c.config) throw ConfigError("sweep: --config is required");
  const ExperimentConfig cfg = load_config(*c.config);
  if (!cfg.sweep) throw ConfigError("sweep: the config has no 'sweep' section");
  const fs::path dir = output_dir(c, cfg);
  ensure_writable_dir(dir);
  const SweepSpec& sw = *cfg.sweep;
  const bool dp = sw.mode == SweepMode::fit_dp;

  std::string csv = "param,value,seeds,rmse_mean,rmse_std,subspace_dist_mean,max_b_inf_mean";
  if (dp) csv += ",epsilon_spent,nonprivate_rmse_mean";
  if (cfg.baselines) csv += ",single_rmse_mean,full_finetune_rmse_mean,rep_only_rmse_mean";
  csv += "\n";

  for (double v : sw.values) {
    const ExperimentConfig point = sweep_point(cfg, sw.param, v);
    const double n = static_cast<double>(cfg.seeds.size());
    PointMetrics mean;
    mean.epsilon_spent = 0.0;
    mean.nonprivate_rmse = 0.0;
    std::vector<double> rmses;
    for (std::uint64_t seed : cfg.seeds) {
      const PointMetrics pm = run_point(point, seed);
      rmses.push_back(pm.rmse);
      mean.rmse += pm.rmse / n;
      mean.subspace_dist += pm.subspace_dist / n;
      mean.max_b_inf += pm.max_b_inf / n;
      mean.single += pm.single / n;
      mean.finetune += pm.finetune / n;
      mean.rep += pm.rep / n;
      if (dp) {
        mean.epsilon_spent = pm.epsilon_spent;
        mean.nonprivate_rmse += pm.nonprivate_rmse / n;
      }
    }
    double var = 0.0;
    for (double x : rmses) var += (x - mean.rmse) * (x - mean.rmse);
    const double sd = rmses.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;

    csv += sw.param + "," + format_double(v) + "," + std::to_string(cfg.seeds.size()) + "," +
           format_double(mean.rmse) + "," + format_double(sd) + "," +
           format_double(mean.subspace_dist) + "," + format_double(mean.max_b_inf);
    if (dp) csv += "," + format_double(mean.epsilon_spent) + "," + format_double(mean.nonprivate_rmse);
    if (cfg.baselines) {
      csv += "," + format_double(mean.single) + "," + format_double(mean.finetune) + "," +
             format_double(mean.rep);
    }
    csv += "\n";
    out << sw.param << "=" << fmt(v) << "  rmse " << fmt(mean.rmse) << "\n";
  }
  write_text(dir / "sweep.csv", csv);
  out << "wrote " << (dir / "sweep.csv").string() << "\n";
  return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-rank plus sparse multi-task regression"};
  app.name("lrs");
  app.require_subcommand(1);
  std::optional<int> threads;
  optional_flag(&app, "--threads", threads, "Worker threads (0 = all cores; sets LRS_THREADS)")
      ->check(CLI::NonNegativeNumber);

  Common common;
  const auto add_common = [&common](CLI::App* sub) {
    optional_flag(sub, "--config", common.config, "JSON experiment config")
        ->check(CLI::ExistingFile);
    optional_flag(sub, "--out", common.out, "Output directory (default: config output_dir)");
  };

  std::string data_dir, model_path;
  bool no_truth = false, quiet = false, baselines = false;

  CLI::App* gen = app.add_subcommand("gen", "Generate a planted dataset bundle");
  add_common(gen);
  GenFlags gen_flags;
  gen_flags.attach(gen);
  std::optional<std::uint64_t> sample_seed;
  std::optional<int> sample_m;
  optional_flag(gen, "--sample-seed", sample_seed, "Seed of the samples (default: --seed)");
  optional_flag(gen, "--samples", sample_m, "Samples per task to draw (default: --m)");

  const auto add_fit_common = [&](CLI::App* sub) {
    add_common(sub);
    sub->add_option("--data", data_dir, "Dataset bundle directory")->required();
    sub->add_flag("--no-truth", no_truth, "Ignore truth.json even if present");
    sub->add_flag("--quiet", quiet, "Do not print per-iteration progress");
  };

  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit the low-rank plus sparse model");
  add_fit_common(fit_cmd);
  SolverFlags fit_flags;
  fit_flags.attach(fit_cmd);

  CLI::App* rank1_cmd = app.add_subcommand("fit-rank1", "Rank-one central model plus sparse fine-tuning");
  add_fit_common(rank1_cmd);
  std::optional<int> r1_k, r1_iters;
  std::optional<double> r1_c1, r1_c2, r1_c3;
  optional_flag(rank1_cmd, "--k", r1_k, "Sparsity budget per task");
  optional_flag(rank1_cmd, "--iters", r1_iters, "Iterations");
  optional_flag(rank1_cmd, "--c1", r1_c1, "Threshold constant");
  optional_flag(rank1_cmd, "--c2", r1_c2, "Schedule constant");
  optional_flag(rank1_cmd, "--c3", r1_c3, "Schedule constant");

  CLI::App* dp_cmd = app.add_subcommand("fit-dp", "Fit with the differentially private U step");
  add_fit_common(dp_cmd);
  SolverFlags dp_solver_flags;
  dp_solver_flags.attach(dp_cmd);
  PrivacyFlags dp_flags;
  dp_flags.attach(dp_cmd);

  CLI::App* adapt_cmd = app.add_subcommand("adapt", "Fit new tasks against a frozen model");
  add_common(adapt_cmd);
  adapt_cmd->add_option("--model", model_path, "model.json of a fitted model")->required();
  adapt_cmd->add_option("--data", data_dir, "Bundle with the new tasks")->required();
  AdaptFlags adapt_flags;
  optional_flag(adapt_cmd, "--k", adapt_flags.k, "Sparsity budget (default: the model's)");
  optional_flag(adapt_cmd, "--iters", adapt_flags.iters, "Outer iterations");
  optional_flag(adapt_cmd, "--noise-floor", adapt_flags.noise_floor, "Additive threshold floor");
  optional_flag(adapt_cmd, "--ridge", adapt_flags.ridge, "Ridge added to the w solve");
  adapt_cmd->add_flag("--oracle", adapt_flags.oracle, "Take the schedule from truth.json");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Print a metrics table for a fitted model");
  add_common(eval_cmd);
  eval_cmd->add_option("--model", model_path, "model.json of a fitted model")->required();
  eval_cmd->add_option("--data", data_dir, "Training bundle")->required();
  std::optional<std::string> test_dir, csv_path;
  optional_flag(eval_cmd, "--test", test_dir, "Held-out bundle with the same tasks");
  optional_flag(eval_cmd, "--csv", csv_path, "Also write the table as CSV");
  eval_cmd->add_flag("--baselines", baselines, "Add single, fine-tune and rep-only baselines");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run a parameter grid and write one CSV");
  add_common(sweep_cmd);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  if (threads) {
    const std::string value = std::to_string(*threads);
    ::setenv("LRS_THREADS", value.c_str(), 1);
  }

  try {
    if (gen->parsed()) return cmd_gen(common, gen_flags, sample_seed, sample_m, out);
    if (fit_cmd->parsed()) return cmd_fit(common, fit_flags, data_dir, no_truth, quiet, out);
    if (rank1_cmd->parsed()) {
      return cmd_fit_rank1(common, r1_k, r1_iters, r1_c1, r1_c2, r1_c3, data_dir, no_truth,
                           quiet, out);
    }
    if (dp_cmd->parsed()) {
      return cmd_fit_dp(common, dp_solver_flags, dp_flags, data_dir, no_truth, quiet, out);
    }
    if (adapt_cmd->parsed()) return cmd_adapt(common, adapt_flags, model_path, data_dir, out);
    if (eval_cmd->parsed()) {
      return cmd_eval(common, model_path, data_dir, test_dir, baselines, csv_path, out);
    }
    if (sweep_cmd->parsed()) return cmd_sweep(common, out);
  } catch (const ConfigError& e) {
    err << "lrs: config error: " << e.what() << "\n";
    return kExitInput;
  } catch (const FormatError& e) {
    err << "lrs: format error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InfeasibleSparsity& e) {
    err << "lrs: config error: " << e.what() << "\n";
    return kExitInput;
  } catch (const Error& e) {
    err << "lrs: error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "lrs: error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitInput;
}

} // namespace lrs
