#include "lrs/dp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "lrs/datagen.hpp"
#include "lrs/errors.hpp"
#include "lrs/numerics.hpp"
#include "lrs/parallel.hpp"
#include "lrs/rng.hpp"

namespace lrs {

namespace {

void check_delta(double delta) {
  if (!(delta > 0.0) || !(delta < 1.0)) throw DomainError("privacy: delta must lie in (0, 1)");
}

double quantile_of(std::vector<double> values, double q) {
  if (values.empty()) return 1.0;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

} // namespace

void PrivacyLedger::record(int iteration, double rho) {
  if (static_cast<int>(releases_.size()) >= planned_) {
    throw PrivacyBudgetMismatch("privacy: release " + std::to_string(releases_.size() + 1) +
                                " exceeds the " + std::to_string(planned_) +
                                " releases the noise was calibrated for");
  }
  releases_.push_back({iteration, rho});
}

double PrivacyLedger::rho_total() const {
  double total = 0.0;
  for (const auto& r : releases_) total += r.rho;
  return total;
}

double PrivacyLedger::epsilon_at(double delta) const { return zcdp_epsilon(rho_total(), delta); }

double zcdp_epsilon(double rho, double delta) {
  check_delta(delta);
  if (rho < 0.0) throw DomainError("privacy: rho must be nonnegative");
  return rho + 2.0 * std::sqrt(rho * std::log(1.0 / delta));
}

double accountant_epsilon(double sigma_dp, double delta) {
  if (!(sigma_dp > 0.0)) throw DomainError("privacy: sigma_dp must be positive");
  return zcdp_epsilon(1.0 / (sigma_dp * sigma_dp), delta);
}

double calibrate_noise_general(double epsilon, double delta) {
  if (!(epsilon > 0.0)) throw DomainError("privacy: epsilon must be positive");
  check_delta(delta);
  return 2.0 * std::sqrt(std::log(1.0 / delta) + epsilon) / epsilon;
}

std::optional<double> calibrate_noise_small_epsilon(double epsilon, double delta) {
  if (!(epsilon > 0.0)) throw DomainError("privacy: epsilon must be positive");
  check_delta(delta);
  const double log_inv = std::log(1.0 / delta);
  if (epsilon > log_inv) return std::nullopt;
  return std::sqrt(8.0 * log_inv) / epsilon;
}

double calibrate_noise(double epsilon, double delta) {
  const double general = calibrate_noise_general(epsilon, delta);
  const auto small = calibrate_noise_small_epsilon(epsilon, delta);
  return small ? std::min(general, *small) : general;
}

NoiseStds noise_stds(const PrivacyConfig& cfg, int m) {
  const double scale = static_cast<double>(m) * std::sqrt(static_cast<double>(cfg.planned_iters)) *
                       cfg.sigma_dp;
  return {scale * cfg.a1 * cfg.a1 * cfg.aw * cfg.aw, scale * cfg.a1 * (cfg.a2 + cfg.a3) * cfg.aw};
}

ReleaseNoise draw_release_noise(Eigen::Index d, Eigen::Index r, const NoiseStds& stds,
                                std::uint64_t noise_seed, int iteration) {
  ReleaseNoise out;
  const auto n = d * r;
  KeyedStream noise(noise_seed, streams::dp_noise + static_cast<std::uint64_t>(iteration));
  if (stds.sigma1 > 0.0) {
    out.operator_noise.resize(n, n);
    for (Eigen::Index col = 0; col < n; ++col) {
      for (Eigen::Index row = 0; row <= col; ++row) {
        const double z = stds.sigma1 * noise.gaussian();
        out.operator_noise(row, col) = z;
        out.operator_noise(col, row) = z;
      }
    }
  }
  if (stds.sigma2 > 0.0) {
    out.rhs_noise.resize(d, r);
    for (Eigen::Index col = 0; col < r; ++col) {
      for (Eigen::Index row = 0; row < d; ++row) out.rhs_noise(row, col) = stds.sigma2 * noise.gaussian();
    }
  }
  return out;
}

ClipEstimates clip_estimates(const GroundTruth& gt, int m, int iters) {
  const auto inc = measure_incoherence(gt);
  ClipEstimates est;
  est.d = static_cast<int>(gt.dim());
  est.mu_lambda_r = inc.mu_star * inc.lambda_r;
  est.max_b_norm = gt.b_star.colwise().norm().maxCoeff();
  est.sigma = gt.sigma;
  est.m = m;
  est.t = static_cast<double>(gt.tasks());
  est.iters = iters;
  return est;
}

ClipLevels default_clip_levels(const ClipEstimates& est) {
  const double tail = std::sqrt(2.0 * std::log(10.0 * est.m * est.t * est.iters));
  const double root_ml = std::sqrt(est.mu_lambda_r);
  ClipLevels out;
  out.a1 = std::sqrt(static_cast<double>(est.d)) * tail;
  out.a2 = (root_ml + est.max_b_norm + est.sigma) * tail;
  out.a3 = std::max(est.max_b_norm * tail, 1e-6);
  out.aw = root_ml * tail;
  return out;
}

ClipLevels default_clip_levels(const GroundTruth& gt, int m, int iters) {
  return default_clip_levels(clip_estimates(gt, m, iters));
}

ClipLevels fallback_clip_levels(std::span<const TaskDataset> datasets, double quantile) {
  if (!(quantile > 0.0) || quantile > 1.0) throw DomainError("clip: quantile must lie in (0, 1]");
  std::vector<double> x_norms;
  std::vector<double> y_abs;
  std::vector<double> moment_norms;
  for (const auto& data : datasets) {
    for (Eigen::Index j = 0; j < data.x.rows(); ++j) {
      x_norms.push_back(data.x.row(j).norm());
      y_abs.push_back(std::abs(data.y[j]));
    }
    moment_norms.push_back((data.x.transpose() * data.y).norm() / static_cast<double>(data.samples()));
  }
  ClipLevels out;
  const double floor = 1e-6;
  out.a1 = std::max(quantile_of(x_norms, quantile), floor);
  out.a2 = std::max(quantile_of(y_abs, quantile), floor);
  out.a3 = out.a2;
  out.aw = std::max(quantile_of(moment_norms, quantile), floor);
  return out;
}

void apply_clip_levels(PrivacyConfig& cfg, const ClipLevels& levels) {
  cfg.a1 = levels.a1;
  cfg.a2 = levels.a2;
  cfg.a3 = levels.a3;
  cfg.aw = levels.aw;
}

ClippedData clip_data(std::span<const TaskDataset> datasets, const PrivacyConfig& cfg) {
  ClippedData out;
  out.x.resize(datasets.size());
  out.y.resize(datasets.size());
  out.grams.resize(datasets.size());
  parallel_for(datasets.size(), [&](std::size_t i) {
    const auto& data = datasets[i];
    Matrix x = data.x;
    Vector y = data.y;
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      x.row(j) = clip_vector(data.x.row(j).transpose(), cfg.a1).transpose();
      y[j] = clip_scalar(data.y[j], cfg.a2);
    }
    out.grams[i] = x.transpose() * x;
    out.x[i] = std::move(x);
    out.y[i] = std::move(y);
  });
  return out;
}

PrivateUpdate private_update_u(std::span<const TaskDataset> datasets, const ClippedData& clipped,
                               const Matrix& w, const Matrix& b, const PrivacyConfig& cfg,
                               std::uint64_t noise_seed, int iteration) {
  cfg.validate();
  const auto t = datasets.size();
  if (t == 0) throw DomainError("private_update_u: need at least one user");
  const auto d = static_cast<Eigen::Index>(datasets.front().dim());
  const auto r = w.cols();
  if (w.rows() != static_cast<Eigen::Index>(t) || b.rows() != d ||
      b.cols() != static_cast<Eigen::Index>(t) || clipped.x.size() != t) {
    throw DomainError("private_update_u: dimension mismatch");
  }

  Matrix w_clipped(static_cast<Eigen::Index>(t), r);
  std::vector<Matrix> rhs_parts(t);
  int max_m = 0;
  double samples = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    max_m = std::max(max_m, static_cast<int>(datasets[i].samples()));
    samples += static_cast<double>(datasets[i].samples());
  }
  parallel_for(t, [&](std::size_t i) {
    const auto idx = static_cast<Eigen::Index>(i);
    const Vector wi = clip_vector(w.row(idx).transpose(), cfg.aw);
    w_clipped.row(idx) = wi.transpose();
    const Vector xb = datasets[i].x * b.col(idx);
    Vector resid = clipped.y[i];
    for (Eigen::Index j = 0; j < resid.size(); ++j) resid[j] -= clip_scalar(xb[j], cfg.a3);
    rhs_parts[i] = (clipped.x[i].transpose() * resid) * wi.transpose();
  });
  Matrix rhs = Matrix::Zero(d, r);
  for (const auto& part : rhs_parts) rhs += part;

  ReleaseNoise noise = draw_release_noise(d, r, noise_stds(cfg, max_m), noise_seed, iteration);
  if (noise.rhs_noise.size() > 0) rhs += noise.rhs_noise;

  // Both sides carry the 1/(mt) normalization.
  const double scale = 1.0 / samples;
  std::vector<std::reference_wrapper<const Matrix>> grams(clipped.grams.begin(), clipped.grams.end());
  StructuredSystem sys{std::move(grams), w_clipped, scale * rhs, std::move(noise.operator_noise),
                       scale};

  PrivateUpdate out;
  out.u_pre = solve_structured(sys);
  out.rho = cfg.sigma_dp > 0.0
                ? 1.0 / (static_cast<double>(cfg.planned_iters) * cfg.sigma_dp * cfg.sigma_dp)
                : std::numeric_limits<double>::infinity();
  return out;
}

PrivateUpdate private_update_u(std::span<const TaskDataset> datasets, const Matrix& w,
                               const Matrix& b, const PrivacyConfig& cfg,
                               std::uint64_t noise_seed, int iteration) {
  return private_update_u(datasets, clip_data(datasets, cfg), w, b, cfg, noise_seed, iteration);
}

PrivateFitResult fit_private(std::span<const TaskDataset> datasets, const SolverConfig& cfg,
                             const PrivacyConfig& pcfg, const FitOptions& options,
                             std::uint64_t noise_seed,
                             const std::function<void(const PrivacyLedger&)>& on_release) {
  pcfg.validate();
  PrivateFitResult out;
  out.ledger = PrivacyLedger(pcfg.planned_iters);
  std::map<const TaskDataset*, ClippedData> clipped_batches;
  const UStep step = [&](std::span<const TaskDataset> data, std::span<const TaskCache>,
                         const Matrix& w, const Matrix& b, int iteration) {
    if (iteration > pcfg.planned_iters) {
      throw PrivacyBudgetMismatch("privacy: iteration " + std::to_string(iteration) +
                                  " exceeds planned_iters = " + std::to_string(pcfg.planned_iters));
    }
    auto it = clipped_batches.find(data.data());
    if (it == clipped_batches.end()) {
      it = clipped_batches.emplace(data.data(), clip_data(data, pcfg)).first;
    }
    PrivateUpdate upd = private_update_u(data, it->second, w, b, pcfg, noise_seed, iteration);
    out.ledger.record(iteration, upd.rho);
    if (on_release) on_release(out.ledger);
    return upd.u_pre;
  };
  FitOptions opts = options;
  opts.refit_w_after_u = true;
  FitResult fr = fit_with_u_step(datasets, cfg, opts, step);
  out.state = std::move(fr.state);
  out.report = std::move(fr.report);
  return out;
}

} // namespace lrs
