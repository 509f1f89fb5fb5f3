#pragma once

#include <cstdint>
#include <vector>

#include "lrs/model.hpp"

namespace lrs {

/// How the per-task sparse supports are sized.
///
/// exact: every column gets exactly k nonzeros; infeasible budgets throw.
/// capped: the min(t*k, d*zeta) available slots are spread as evenly as
/// possible over the columns, so each column gets at most k.
enum class SupportMode { exact, capped };

/// How the planted task weights w*_i are drawn.
enum class WeightMode { gaussian, ones };

struct GenConfig {
  int d = 10;
  int r = 1;
  int t = 10;
  int m = 10;
  int k = 0;
  int zeta = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  double w_scale = 1.0;
  SupportMode support = SupportMode::exact;
  WeightMode weights = WeightMode::gaussian;

  void validate() const;
};

GroundTruth gen_ground_truth(const GenConfig& cfg);

/// m fresh samples per task: x ~ N(0, I), y = <x, theta_i> + sigma z.
std::vector<TaskDataset> gen_samples(const GroundTruth& gt, int m, std::uint64_t seed);

struct IncoherenceReport {
  double mu_star = 0.0;
  double lambda_1 = 0.0;
  double lambda_r = 0.0;
  double u_two_inf = 0.0;
  double w_two_inf = 0.0;
  /// ||W*||_{2,inf} / sqrt(mu* lambda_r); at most 1 by construction of mu*.
  double w_incoherence = 0.0;
  /// ||U*||_{2,inf} * sqrt(d / (mu* r)); at most 1 by construction of mu*.
  double u_incoherence = 0.0;
  int max_row_nonzeros = 0;
  int max_col_nonzeros = 0;
};

/// Task-diversity eigenvalues of (r/t) W*^T W* and the smallest incoherence
/// constant mu* for which both the W* and U* row-norm bounds hold.
IncoherenceReport measure_incoherence(const GroundTruth& gt);

} // namespace lrs
