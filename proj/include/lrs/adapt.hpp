#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <span>

#include "lrs/model.hpp"

namespace lrs {

/// (1/mt) sum_ij y_ij^2 x_ij x_ij^T, symmetrized.
Matrix moment_matrix(std::span<const TaskDataset> datasets);

/// Top-r eigenvectors of (moment - I). Throws DegenerateMoment when the
/// leading r-dimensional eigenspace is not determined.
Matrix mom_init_from_moment(const Matrix& moment, int r);

/// Method-of-moments warm start for U.
Matrix mom_init(std::span<const TaskDataset> datasets, int r);

struct AdaptConfig {
  int k = 0;
  int iters = 20;
  double c1 = 0.25;
  double c_prime = 0.5;
  double c_dprime = 0.5;
  double c3 = 0.1;
  double c4 = 0.25;
  /// The additive floor A on every threshold term.
  double noise_floor = 0.0;
  /// Bound on the subspace error of u; replaced by the true distance in
  /// oracle mode.
  double rho = 0.0;
  double eps = 1e-6;
  int inner_cap = 100;
  double ridge = 0.0;
  /// Take ||w*|| and rho from the supplied truth instead of plug-ins.
  bool oracle_schedule = false;
};

struct AdaptResult {
  Vector w;
  Vector b;
  /// ||u w + b - theta*||^2 when a truth was supplied, NaN otherwise.
  double gap = std::numeric_limits<double>::quiet_NaN();
};

/// Observes (stage, w, b) after each block update; stage is "w" or "b".
using AdaptObserver = std::function<void(const char*, const Vector&, const Vector&)>;

/// Fits a new task's (w, b) against a frozen representation u.
///
/// truth, if given, is a single-task GroundTruth (t = 1) for the new task.
AdaptResult adapt_new_task(const TaskDataset& data, const Matrix& u, const AdaptConfig& cfg,
                           const GroundTruth* truth = nullptr,
                           const AdaptObserver& observer = {});

} // namespace lrs
