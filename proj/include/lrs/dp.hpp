#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "lrs/model.hpp"
#include "lrs/solver_amht.hpp"

namespace lrs {

struct PrivacyRelease {
  int iteration = 0;
  double rho = 0.0;
};

/// zCDP bookkeeping for the published U sequence. Costs add under composition.
class PrivacyLedger {
public:
  PrivacyLedger() = default;
  explicit PrivacyLedger(int planned_releases) : planned_(planned_releases) {}

  /// Throws PrivacyBudgetMismatch once more releases than planned are made.
  void record(int iteration, double rho);

  double rho_total() const;
  double epsilon_at(double delta) const;
  const std::vector<PrivacyRelease>& releases() const { return releases_; }
  int planned() const { return planned_; }

private:
  int planned_ = 0;
  std::vector<PrivacyRelease> releases_;
};

/// rho-zCDP to (epsilon, delta): rho + 2 sqrt(rho ln(1/delta)).
double zcdp_epsilon(double rho, double delta);

/// Epsilon spent by a full run with noise multiplier sigma_dp (rho = 1/sigma^2).
double accountant_epsilon(double sigma_dp, double delta);

/// 2 sqrt(ln(1/delta) + epsilon) / epsilon.
double calibrate_noise_general(double epsilon, double delta);
/// sqrt(8 ln(1/delta)) / epsilon; only valid when epsilon <= ln(1/delta).
std::optional<double> calibrate_noise_small_epsilon(double epsilon, double delta);
/// The smaller of the valid calibrations.
double calibrate_noise(double epsilon, double delta);

struct NoiseStds {
  double sigma1 = 0.0; // entries of the rd x rd operator noise
  double sigma2 = 0.0; // entries of the d x r right-hand-side noise
};

/// Standard deviations of the two noise matrices for per-user sample count m.
NoiseStds noise_stds(const PrivacyConfig& cfg, int m);

/// Noise of one release. operator_noise is rd x rd and symmetric: the upper
/// triangle is i.i.d. N(0, sigma1^2) and mirrored. rhs_noise is d x r with
/// i.i.d. N(0, sigma2^2) entries. A matrix is empty when its std is 0.
struct ReleaseNoise {
  Matrix operator_noise;
  Matrix rhs_noise;
};
ReleaseNoise draw_release_noise(Eigen::Index d, Eigen::Index r, const NoiseStds& stds,
                                std::uint64_t noise_seed, int iteration);

struct ClipLevels {
  double a1 = 1.0; // covariates
  double a2 = 1.0; // responses
  double a3 = 1.0; // x^T b
  double aw = 1.0; // task weights
};

/// Plug-in quantities for the theoretical clip levels.
struct ClipEstimates {
  int d = 1;
  double mu_lambda_r = 1.0; // mu* lambda*_r
  double max_b_norm = 0.0;  // max_i ||b*_i||_2
  double sigma = 0.0;
  double m = 1.0;
  double t = 1.0;
  double iters = 1.0;
};

ClipEstimates clip_estimates(const GroundTruth& gt, int m, int iters);

/// Clip levels scaled by sqrt(2 ln(10 m t L)), the Gaussian tail factor.
ClipLevels default_clip_levels(const ClipEstimates& est);
ClipLevels default_clip_levels(const GroundTruth& gt, int m, int iters);

/// Data-driven levels at the given quantile: ||x|| for a1, |y| for a2 and a3,
/// and the per-task moment estimate ||X^T y / m|| for aw.
ClipLevels fallback_clip_levels(std::span<const TaskDataset> datasets, double quantile = 0.999);

void apply_clip_levels(PrivacyConfig& cfg, const ClipLevels& levels);

/// Covariates and responses clipped once; they do not change across iterations.
struct ClippedData {
  std::vector<Matrix> x;     // per user, m x d, rows clipped to a1
  std::vector<Vector> y;     // per user, clipped to a2
  std::vector<Matrix> grams; // per user, x^T x of the clipped rows
};

ClippedData clip_data(std::span<const TaskDataset> datasets, const PrivacyConfig& cfg);

struct PrivateUpdate {
  Matrix u_pre; // d x r, before orthonormalization
  double rho = 0.0;
};

/// Noisy U step: clipped sufficient statistics plus Gaussian noise, solved
/// with the same structured solver as the non-private step.
PrivateUpdate private_update_u(std::span<const TaskDataset> datasets, const Matrix& w,
                               const Matrix& b, const PrivacyConfig& cfg,
                               std::uint64_t noise_seed, int iteration = 1);
PrivateUpdate private_update_u(std::span<const TaskDataset> datasets, const ClippedData& clipped,
                               const Matrix& w, const Matrix& b, const PrivacyConfig& cfg,
                               std::uint64_t noise_seed, int iteration);

struct PrivateFitResult {
  ModelState state;
  FitReport report;
  PrivacyLedger ledger;
};

/// The alternating solver with the private U step. w and b are computed
/// locally per user and are never released.
PrivateFitResult fit_private(std::span<const TaskDataset> datasets, const SolverConfig& cfg,
                             const PrivacyConfig& pcfg, const FitOptions& options = {},
                             std::uint64_t noise_seed = 0,
                             const std::function<void(const PrivacyLedger&)>& on_release = {});

} // namespace lrs
