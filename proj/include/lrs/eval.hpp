#pragma once

#include <optional>
#include <span>

#include "lrs/model.hpp"
#include "lrs/solver_amht.hpp"

namespace lrs {

/// ||(I - u_ref u_ref^T) u||_F for orthonormal u, u_ref.
double subspace_distance(const Matrix& u, const Matrix& u_ref);

struct RecoveryErrors {
  double subspace_dist = 0.0;
  double max_b_inf = 0.0;     // max_i ||b_i - b*_i||_inf
  double max_theta_l2 = 0.0;  // max_i ||theta_i - theta*_i||_2
  double support_precision = 1.0;
  double support_recall = 1.0;
};

RecoveryErrors recovery_errors(const ModelState& state, const GroundTruth& gt);

/// Root mean squared residual over every sample of every task.
double rmse(const ModelState& state, std::span<const TaskDataset> datasets);
/// Same, for per-task parameters stored as columns of thetas (d x t).
double rmse(const Matrix& thetas, std::span<const TaskDataset> datasets);

/// Excess population risk ||theta - theta*||^2 under isotropic design.
double population_gap(const Vector& theta, const Vector& theta_star);
double population_gap(const ModelState& state, std::size_t task, const GroundTruth& gt);

/// Ridge used by baselines when none is given: 1e-6 trace(G)/dim if the
/// system is underdetermined, else 0.
double default_ridge(const Matrix& gram, double samples);

/// One pooled model for all tasks.
Vector baseline_single(std::span<const TaskDataset> datasets,
                       std::optional<double> ridge = std::nullopt);
/// Independent ridge regression per task; column i is task i's parameter.
Matrix baseline_full_finetune(std::span<const TaskDataset> datasets,
                              std::optional<double> ridge = std::nullopt);
/// Low-rank representation only: the alternating solver with k = 0.
FitResult baseline_rep_only(std::span<const TaskDataset> datasets, SolverConfig cfg,
                            const FitOptions& options = {});

/// Per-task parameters of a state as columns of a d x t matrix.
Matrix thetas_of(const ModelState& state);
Matrix replicate(const Vector& theta, std::size_t tasks);

} // namespace lrs
