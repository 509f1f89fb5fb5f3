#include "lrs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "lrs/errors.hpp"
#include "lrs/numerics.hpp"
#include "lrs/parallel.hpp"

namespace lrs {

double subspace_distance(const Matrix& u, const Matrix& u_ref) {
  if (u.rows() != u_ref.rows()) throw DomainError("subspace_distance: dimension mismatch");
  if (frobenius_orthonormality_defect(u) > 1e-8 || frobenius_orthonormality_defect(u_ref) > 1e-8) {
    throw DomainError("subspace_distance: inputs must have orthonormal columns");
  }
  return (u - u_ref * (u_ref.transpose() * u)).norm();
}

RecoveryErrors recovery_errors(const ModelState& state, const GroundTruth& gt) {
  if (state.tasks() != gt.tasks() || state.dim() != gt.dim()) {
    throw DomainError("recovery_errors: state and truth shapes differ");
  }
  RecoveryErrors out;
  out.subspace_dist = subspace_distance(state.u, gt.u_star);
  std::size_t predicted = 0;
  std::size_t planted = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gt.tasks(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    out.max_b_inf = std::max(out.max_b_inf, (state.b.col(idx) - gt.b_star.col(idx)).cwiseAbs().maxCoeff());
    out.max_theta_l2 = std::max(out.max_theta_l2, (state.theta(i) - gt.theta(i)).norm());
    for (Eigen::Index j = 0; j < gt.b_star.rows(); ++j) {
      const bool p = state.b(j, idx) != 0.0;
      const bool s = gt.b_star(j, idx) != 0.0;
      predicted += p;
      planted += s;
      hits += p && s;
    }
  }
  out.support_precision = predicted ? static_cast<double>(hits) / static_cast<double>(predicted) : 1.0;
  out.support_recall = planted ? static_cast<double>(hits) / static_cast<double>(planted) : 1.0;
  return out;
}

Matrix thetas_of(const ModelState& state) {
  return state.u * state.w.transpose() + state.b;
}

Matrix replicate(const Vector& theta, std::size_t tasks) {
  return theta.replicate(1, static_cast<Eigen::Index>(tasks));
}

double rmse(const Matrix& thetas, std::span<const TaskDataset> datasets) {
  if (thetas.cols() != static_cast<Eigen::Index>(datasets.size())) {
    throw DomainError("rmse: one parameter column per task required");
  }
  std::vector<double> sse(datasets.size());
  parallel_for(datasets.size(), [&](std::size_t i) {
    sse[i] = (datasets[i].x * thetas.col(static_cast<Eigen::Index>(i)) - datasets[i].y).squaredNorm();
  });
  double total = 0.0;
  double samples = 0.0;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    total += sse[i];
    samples += static_cast<double>(datasets[i].samples());
  }
  return std::sqrt(total / samples);
}

double rmse(const ModelState& state, std::span<const TaskDataset> datasets) {
  return rmse(thetas_of(state), datasets);
}

double population_gap(const Vector& theta, const Vector& theta_star) {
  if (theta.size() != theta_star.size()) throw DomainError("population_gap: dimension mismatch");
  return (theta - theta_star).squaredNorm();
}

double population_gap(const ModelState& state, std::size_t task, const GroundTruth& gt) {
  return population_gap(state.theta(task), gt.theta(task));
}

double default_ridge(const Matrix& gram, double samples) {
  const auto dim = static_cast<double>(gram.rows());
  return samples < dim ? 1e-6 * gram.trace() / dim : 0.0;
}

Vector baseline_single(std::span<const TaskDataset> datasets, std::optional<double> ridge) {
  if (datasets.empty()) throw DomainError("baseline_single: need at least one task");
  const auto d = static_cast<Eigen::Index>(datasets.front().dim());
  Matrix gram = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  double samples = 0.0;
  for (const auto& data : datasets) {
    gram.noalias() += data.x.transpose() * data.x;
    rhs.noalias() += data.x.transpose() * data.y;
    samples += static_cast<double>(data.samples());
  }
  return solve_normal_equations(gram, rhs, ridge.value_or(default_ridge(gram, samples)));
}

Matrix baseline_full_finetune(std::span<const TaskDataset> datasets, std::optional<double> ridge) {
  if (datasets.empty()) throw DomainError("baseline_full_finetune: need at least one task");
  const auto d = static_cast<Eigen::Index>(datasets.front().dim());
  Matrix out(d, static_cast<Eigen::Index>(datasets.size()));
  parallel_for(datasets.size(), [&](std::size_t i) {
    const auto& data = datasets[i];
    const Matrix gram = data.x.transpose() * data.x;
    const double lam = ridge.value_or(default_ridge(gram, static_cast<double>(data.samples())));
    out.col(static_cast<Eigen::Index>(i)) = solve_normal_equations(gram, data.x.transpose() * data.y, lam);
  });
  return out;
}

FitResult baseline_rep_only(std::span<const TaskDataset> datasets, SolverConfig cfg,
                            const FitOptions& options) {
  cfg.k = 0;
  return fit(datasets, cfg, options);
}

} // namespace lrs
