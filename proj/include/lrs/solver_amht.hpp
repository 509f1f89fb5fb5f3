#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "lrs/model.hpp"
#include "lrs/task_cache.hpp"

namespace lrs {

struct IterationRecord {
  int iteration = 0;
  double train_mse = 0.0;
  /// Distance to the planted subspace; NaN when no ground truth was given.
  double subspace_dist = std::numeric_limits<double>::quiet_NaN();
  std::size_t max_nonzeros = 0;
  /// Last hard threshold applied during the iteration.
  double delta = 0.0;
  double wall_seconds = 0.0;
};

struct FitReport {
  std::vector<IterationRecord> records;
};

struct FitResult {
  ModelState state;
  FitReport report;
};

struct FitOptions {
  std::optional<Matrix> init_u;
  const GroundTruth* truth = nullptr;
  /// Overrides cfg.init_bound / cfg.gamma0 with values derived from truth.
  bool bounds_from_truth = true;
  /// After the U step, re-solve w against the new U instead of carrying it
  /// through the QR factor. Used when the U step is not an exact minimizer.
  bool refit_w_after_u = false;
  std::function<void(const IterationRecord&)> on_iteration;
  /// Observes (stage, state) after each block update; stage is "b", "w" or "u".
  std::function<void(const char*, const ModelState&)> on_block;
};

/// One thresholded gradient move from b (grad is the gradient of
/// (1/2m)||X(v + b) - y||^2 at b). If more than k entries survive, only the
/// k largest are kept. The unit step is halved while the move's curvature
/// along (b_new - b) exceeds 1.5, which keeps the iteration stable when m is
/// close to or below d.
Vector iht_step(const TaskCache& cache, const Vector& b, const Vector& grad, double delta, int k);

/// Iterative hard thresholding for one task's sparse correction.
///
/// Runs iters rounds of a unit-step gradient move on
/// (1/2m)||X(v + b) - y||^2 followed by hard thresholding at
/// delta = alpha + c1 (gamma + beta / sqrt(k)), with gamma refreshed after
/// each round; each move is an iht_step. last_delta, when non-null, receives the final threshold.
Vector optimize_sparse_vector(const TaskDataset& data, const Vector& v, const Vector& b0,
                              double alpha, double beta, double gamma, int iters, double c1,
                              int k, double* last_delta = nullptr);
Vector optimize_sparse_vector(const TaskCache& cache, const Vector& v, const Vector& b0,
                              double alpha, double beta, double gamma, int iters, double c1,
                              int k, double* last_delta = nullptr);

/// Exact block minimizer of the squared loss in w for fixed (u, b).
Vector update_w(const TaskDataset& data, const Matrix& u, const Vector& b, double ridge_eps);
Vector update_w(const TaskCache& cache, const Matrix& u, const Vector& b, double ridge_eps);

/// Unconstrained minimizer over U (before orthonormalization) for fixed W, B.
Matrix update_u(std::span<const TaskDataset> datasets, const Matrix& w, const Matrix& b);
Matrix update_u(std::span<const TaskCache> caches, const Matrix& w, const Matrix& b);

/// Sum over tasks and samples of (1/2)(y - <x, U w_i + b_i>)^2.
double training_objective(std::span<const TaskDataset> datasets, const ModelState& state);
double training_mse(std::span<const TaskDataset> datasets, const ModelState& state);

/// Produces the pre-QR U for one outer iteration (1-based). Receives the
/// batch of samples reserved for the U step.
using UStep = std::function<Matrix(std::span<const TaskDataset> data,
                                   std::span<const TaskCache> caches, const Matrix& w,
                                   const Matrix& b, int iteration)>;

/// Alternating minimization: sparse b step, closed-form w step, structured
/// U step followed by QR. Runs cfg.outer_iters iterations unless the subspace
/// stops moving (cfg.stop_tol).
FitResult fit(std::span<const TaskDataset> datasets, const SolverConfig& cfg,
              const FitOptions& options = {});

/// Same loop with a caller-supplied U step.
FitResult fit_with_u_step(std::span<const TaskDataset> datasets, const SolverConfig& cfg,
                          const FitOptions& options, const UStep& u_step);

/// Number of inner IHT rounds for outer iteration ell.
int inner_iterations(int ell, double gamma_prev, const SolverConfig& cfg);

} // namespace lrs
