#include "lrs/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lrs/errors.hpp"

namespace lrs {

namespace {

void check_task(std::size_t task, std::size_t tasks) {
  if (task >= tasks) {
    throw std::out_of_range("task index " + std::to_string(task) +
                            " out of range (t = " + std::to_string(tasks) + ")");
  }
}

} // namespace

double frobenius_orthonormality_defect(const Matrix& u) {
  const Matrix gram = u.transpose() * u;
  return (gram - Matrix::Identity(gram.rows(), gram.cols())).norm();
}

Vector GroundTruth::theta(std::size_t task) const {
  check_task(task, tasks());
  return u_star * w_star.row(static_cast<Eigen::Index>(task)).transpose() +
         b_star.col(static_cast<Eigen::Index>(task));
}

void GroundTruth::validate() const {
  const auto d = u_star.rows();
  const auto r = u_star.cols();
  const auto t = w_star.rows();
  if (r < 1 || d < r) throw DomainError("ground truth requires d >= r >= 1");
  if (t < 1) throw DomainError("ground truth requires t >= 1");
  if (w_star.cols() != r) throw DomainError("w_star must be t x r");
  if (b_star.rows() != d || b_star.cols() != t) throw DomainError("b_star must be d x t");
  if (sigma < 0.0) throw DomainError("sigma must be nonnegative");
  if (frobenius_orthonormality_defect(u_star) > 1e-10) {
    throw DomainError("u_star columns are not orthonormal");
  }
  for (Eigen::Index i = 0; i < t; ++i) {
    if ((b_star.col(i).array() != 0.0).count() > k) {
      throw DomainError("column " + std::to_string(i) + " of b_star exceeds k nonzeros");
    }
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    if ((b_star.row(j).array() != 0.0).count() > zeta) {
      throw DomainError("row " + std::to_string(j) + " of b_star exceeds zeta nonzeros");
    }
  }
}

TaskDataset::TaskDataset(Matrix x_, Vector y_) : x(std::move(x_)), y(std::move(y_)) {
  if (x.rows() != y.size()) throw DomainError("x and y row counts differ");
  if (x.rows() < 1) throw DomainError("a task needs at least one sample");
}

Vector ModelState::theta(std::size_t task) const {
  check_task(task, tasks());
  return u * w.row(static_cast<Eigen::Index>(task)).transpose() +
         b.col(static_cast<Eigen::Index>(task));
}

std::size_t ModelState::nonzeros(std::size_t task) const {
  check_task(task, tasks());
  return static_cast<std::size_t>((b.col(static_cast<Eigen::Index>(task)).array() != 0.0).count());
}

std::size_t ModelState::max_nonzeros() const {
  std::size_t best = 0;
  for (std::size_t i = 0; i < tasks(); ++i) best = std::max(best, nonzeros(i));
  return best;
}

void SolverConfig::validate() const {
  if (r < 1) throw ConfigError("solver: r must be positive");
  if (k < 0) throw ConfigError("solver: k must be nonnegative");
  if (outer_iters < 0) throw ConfigError("solver: outer_iters must be nonnegative");
  if (!(eps > 0.0)) throw ConfigError("solver: eps must be positive");
  if (c1 < 0.0 || c1 > 0.5) throw ConfigError("solver: c1 must lie in [0, 1/2]");
  for (double c : {c3, c4, c5}) {
    if (!(c > 0.0) || c > 1.0) throw ConfigError("solver: c3, c4, c5 must lie in (0, 1]");
  }
  if (inner_cap < 1) throw ConfigError("solver: inner_cap must be positive");
  if (!(init_bound > 0.0)) throw ConfigError("solver: init_bound must be positive");
  if (gamma0 < 0.0) throw ConfigError("solver: gamma0 must be nonnegative");
  if (ridge_eps < 0.0) throw ConfigError("solver: ridge_eps must be nonnegative");
  if (stop_tol < 0.0) throw ConfigError("solver: stop_tol must be nonnegative");
}

void PrivacyConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("privacy: epsilon must be positive");
  if (!(delta > 0.0) || !(delta < 1.0)) throw ConfigError("privacy: delta must lie in (0, 1)");
  if (sigma_dp < 0.0) throw ConfigError("privacy: sigma_dp must be nonnegative");
  if (!(a1 > 0.0) || !(a2 > 0.0) || !(a3 > 0.0) || !(aw > 0.0)) {
    throw ConfigError("privacy: clip levels must be positive");
  }
  if (planned_iters < 1) throw ConfigError("privacy: planned_iters must be positive");
}

} // namespace lrs
