#include "lrs/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "lrs/errors.hpp"
#include "lrs/eval.hpp"
#include "lrs/numerics.hpp"
#include "lrs/parallel.hpp"
#include "lrs/solver_amht.hpp"
#include "lrs/task_cache.hpp"

namespace lrs {

Matrix moment_matrix(std::span<const TaskDataset> datasets) {
  if (datasets.empty()) throw DomainError("moment_matrix: need at least one task");
  const auto d = static_cast<Eigen::Index>(datasets.front().dim());
  std::vector<Matrix> partial(datasets.size());
  parallel_for(datasets.size(), [&](std::size_t i) {
    const auto& data = datasets[i];
    const Matrix weighted = data.x.array().colwise() * data.y.array().square();
    partial[i] = data.x.transpose() * weighted;
  });
  Matrix total = Matrix::Zero(d, d);
  double samples = 0.0;
  for (std::size_t i = 0; i < partial.size(); ++i) {
    total += partial[i];
    samples += static_cast<double>(datasets[i].samples());
  }
  total /= samples;
  return 0.5 * (total + total.transpose());
}

Matrix mom_init_from_moment(const Matrix& moment, int r) {
  const Matrix shifted = moment - Matrix::Identity(moment.rows(), moment.cols());
  const EigResult eig = top_r_eigvecs(shifted, r);
  if (eig.degenerate) {
    throw DegenerateMoment("mom_init: top-" + std::to_string(r) +
                           " eigenspace of the moment matrix is not separated");
  }
  return eig.vectors;
}

Matrix mom_init(std::span<const TaskDataset> datasets, int r) {
  std::size_t samples = 0;
  for (const auto& d : datasets) samples += d.samples();
  if (datasets.empty() || samples < datasets.front().dim()) {
    throw DomainError("mom_init: need at least d samples in total");
  }
  return mom_init_from_moment(moment_matrix(datasets), r);
}

AdaptResult adapt_new_task(const TaskDataset& data, const Matrix& u, const AdaptConfig& cfg,
                           const GroundTruth* truth, const AdaptObserver& observer) {
  const auto d = static_cast<Eigen::Index>(data.dim());
  const auto r = u.cols();
  if (u.rows() != d) throw DomainError("adapt: u must be d x r");
  if (cfg.k < 0 || cfg.k > d) throw ConfigError("adapt: k must lie in [0, d]");
  if (cfg.iters < 0) throw ConfigError("adapt: iters must be nonnegative");
  if (truth && (truth->tasks() != 1 || truth->dim() != data.dim())) {
    throw DomainError("adapt: truth must describe exactly one task of matching dimension");
  }
  if (cfg.oracle_schedule && !truth) throw ConfigError("adapt: oracle schedule needs a truth");

  const TaskCache cache = TaskCache::from(data);
  AdaptResult out;
  out.w = Vector::Zero(r);
  out.b = Vector::Zero(d);

  double rho = cfg.rho;
  double w_star_norm = 0.0;
  if (cfg.oracle_schedule) {
    rho = subspace_distance(u, truth->u_star);
    w_star_norm = truth->w_star.row(0).norm();
  }
  const double root_k = std::sqrt(static_cast<double>(std::max(cfg.k, 1)));
  const double floor = cfg.noise_floor;
  double phi = 2.0;
  double gamma_prev = truth ? truth->b_star.cwiseAbs().maxCoeff() : 1.0;

  SolverConfig inner;
  inner.eps = cfg.eps;
  inner.inner_cap = cfg.inner_cap;

  for (int ell = 1; ell <= cfg.iters; ++ell) {
    out.w = update_w(cache, u, out.b, cfg.ridge);
    if (observer) observer("w", out.w, out.b);
    if (cfg.k == 0) continue;
    const double wn = cfg.oracle_schedule ? w_star_norm : out.w.norm();
    const double alpha = floor + cfg.c1 * phi * wn + 2.0 * rho * wn / root_k;
    const double beta = floor + phi * wn + 2.0 * rho * wn;
    const double gamma =
        floor + (wn / root_k) * (phi * cfg.c_prime + wn * rho * (1.0 + cfg.c_dprime));
    const int rounds = inner_iterations(ell, gamma_prev, inner);
    out.b = optimize_sparse_vector(cache, u * out.w, out.b, alpha, beta, gamma, rounds, cfg.c1,
                                   cfg.k);
    if (observer) observer("b", out.w, out.b);
    gamma_prev = gamma;
    phi = wn * phi * cfg.c3 + 2.0 * rho * wn * (1.0 + cfg.c4) + floor;
  }
  if (truth) out.gap = population_gap(u * out.w + out.b, truth->theta(0));
  return out;
}

} // namespace lrs
