#pragma once

#include <span>

#include "lrs/model.hpp"
#include "lrs/solver_amht.hpp"

namespace lrs {

/// Central model plus per-task sparse fine-tuning (rank one, shared weight).
struct Rank1Config {
  int k = 1;
  int iters = 40;
  double c1 = 0.15;
  double c2 = 0.5;
  double c3 = 0.15;
  /// Initial bounds: sup-norm error of b, l2 and sup-norm error of u.
  double gamma0 = 1.0;
  double tau0 = 1.0;
  double beta0 = 1.0;

  void validate() const;
};

struct Rank1Result {
  Vector u;  // shared model, carries the common weight (not unit norm)
  Matrix b;  // d x t
  FitReport report;
};

struct Rank1Options {
  /// When given, the initial error bounds are the true errors of the zero
  /// start and the report tracks the distance to the planted direction.
  const GroundTruth* truth = nullptr;
  std::function<void(const IterationRecord&)> on_iteration;
  /// Observes (iteration, u, b) after each iteration.
  std::function<void(int, const Vector&, const Matrix&)> on_state;
};

/// Alternates one IHT step per task with an exact pooled least-squares
/// update of the shared vector, starting from u = 0, b = 0.
Rank1Result fit_rank1(std::span<const TaskDataset> datasets, const Rank1Config& cfg,
                      const Rank1Options& options = {});

/// Threshold multiplier per unit of gamma: (c3 + c1 c2 + c1).
double rank1_threshold_ratio(const Rank1Config& cfg);
/// Per-iteration growth of gamma: 2 (c3 + c1 c2 + c1); must be < 1 to decay.
double rank1_contraction(const Rank1Config& cfg);

/// Expresses a rank-one result as a ModelState (unit u, w_i = ||u||).
ModelState to_model_state(const Rank1Result& fit);

} // namespace lrs
