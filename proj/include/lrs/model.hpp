#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace lrs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Planted low-rank-plus-sparse model used to generate and score data.
///
/// Task i has parameter theta_i = u_star * w_star.row(i)^T + b_star.col(i).
/// u_star has orthonormal columns; b_star has at most k nonzeros per column
/// and at most zeta per row.
struct GroundTruth {
  Matrix u_star; // d x r
  Matrix w_star; // t x r
  Matrix b_star; // d x t
  double sigma = 0.0;
  int k = 0;
  int zeta = 0;

  std::size_t dim() const { return static_cast<std::size_t>(u_star.rows()); }
  std::size_t rank() const { return static_cast<std::size_t>(u_star.cols()); }
  std::size_t tasks() const { return static_cast<std::size_t>(w_star.rows()); }

  Vector theta(std::size_t task) const;

  /// Throws DomainError naming the first violated invariant.
  void validate() const;
};

/// One task's samples: row j of x is a covariate vector, y(j) its response.
struct TaskDataset {
  Matrix x; // m x d
  Vector y; // m

  TaskDataset() = default;
  TaskDataset(Matrix x_, Vector y_);

  std::size_t samples() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(x.cols()); }
};

/// Current estimates of the shared representation and the per-task parts.
///
/// (u, w) are identifiable only up to a right rotation; theta() is not.
struct ModelState {
  Matrix u; // d x r, orthonormal columns
  Matrix w; // t x r
  Matrix b; // d x t
  std::size_t iteration = 0;

  std::size_t dim() const { return static_cast<std::size_t>(u.rows()); }
  std::size_t rank() const { return static_cast<std::size_t>(u.cols()); }
  std::size_t tasks() const { return static_cast<std::size_t>(w.rows()); }

  Vector theta(std::size_t task) const;

  /// Number of nonzeros in b.col(task).
  std::size_t nonzeros(std::size_t task) const;
  std::size_t max_nonzeros() const;
};

enum class Batching { reuse, split };

struct SolverConfig {
  int r = 1;
  int k = 0;
  int outer_iters = 15;
  double eps = 1e-4;
  double c1 = 0.25;
  double c3 = 0.5;
  double c4 = 0.55;
  double c5 = 0.55;
  int inner_cap = 50;
  double init_bound = 1.0;
  /// Initial sup-norm error bound on b; also seeds the inner threshold state.
  double gamma0 = 1.0;
  Batching batching = Batching::reuse;
  double ridge_eps = 0.0;
  double stop_tol = 1e-10;

  void validate() const;
};

struct PrivacyConfig {
  double epsilon = 1.0;
  double delta = 1e-5;
  double sigma_dp = 0.0;
  double a1 = 1.0;
  double a2 = 1.0;
  double a3 = 1.0;
  double aw = 1.0;
  int planned_iters = 1;

  void validate() const;
};

double frobenius_orthonormality_defect(const Matrix& u);

} // namespace lrs
