#include "lrs/solver_rank1.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "lrs/errors.hpp"
#include "lrs/numerics.hpp"
#include "lrs/parallel.hpp"
#include "lrs/solver_amht.hpp"
#include "lrs/task_cache.hpp"

namespace lrs {

void Rank1Config::validate() const {
  if (k < 0) throw ConfigError("rank1: k must be nonnegative");
  if (iters < 0) throw ConfigError("rank1: iters must be nonnegative");
  if (c1 <= 0.0 || c2 <= 0.0 || c3 <= 0.0) throw ConfigError("rank1: constants must be positive");
  if (gamma0 < 0.0 || tau0 < 0.0 || beta0 < 0.0) {
    throw ConfigError("rank1: initial bounds must be nonnegative");
  }
}

double rank1_threshold_ratio(const Rank1Config& cfg) { return cfg.c3 + cfg.c1 * cfg.c2 + cfg.c1; }

double rank1_contraction(const Rank1Config& cfg) { return 2.0 * rank1_threshold_ratio(cfg); }

Rank1Result fit_rank1(std::span<const TaskDataset> datasets, const Rank1Config& cfg,
                      const Rank1Options& options) {
  cfg.validate();
  if (datasets.empty()) throw ConfigError("fit_rank1: need at least one task");
  const auto d = static_cast<Eigen::Index>(datasets.front().dim());
  const auto t = datasets.size();
  for (const auto& data : datasets) {
    if (static_cast<Eigen::Index>(data.dim()) != d) throw ConfigError("fit_rank1: tasks differ in d");
  }
  if (cfg.k > d) throw ConfigError("fit_rank1: k exceeds d");

  const auto caches = build_caches(datasets);
  Rank1Result out;
  out.u = Vector::Zero(d);
  out.b = Matrix::Zero(d, static_cast<Eigen::Index>(t));
  if (cfg.iters == 0) return out;

  Matrix pooled = Matrix::Zero(d, d);
  Vector pooled_rhs = Vector::Zero(d);
  for (const auto& c : caches) {
    pooled += c.gram;
    pooled_rhs += c.xty;
  }
  {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(pooled, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < 1e-12 * pooled.trace()) {
      throw SingularSystem("fit_rank1: pooled Gram matrix is singular (mt < d?)");
    }
  }
  const Eigen::LDLT<Matrix> pooled_factor(pooled);

  const double root_k = std::sqrt(static_cast<double>(std::max(cfg.k, 1)));
  double gamma = cfg.gamma0;
  double tau = cfg.tau0;
  double beta = cfg.beta0;
  double alpha = root_k * gamma;
  Vector shared_truth;
  if (options.truth) {
    const auto& gt = *options.truth;
    shared_truth = gt.u_star * gt.w_star.colwise().mean().transpose();
    gamma = gt.b_star.cwiseAbs().maxCoeff();
    alpha = gt.b_star.colwise().norm().maxCoeff();
    tau = shared_truth.norm();
    beta = shared_truth.cwiseAbs().maxCoeff();
  }

  for (int ell = 1; ell <= cfg.iters; ++ell) {
    const auto start = std::chrono::steady_clock::now();
    const double delta = beta + (cfg.c1 / root_k) * (tau + alpha);
    if (cfg.k > 0) {
      parallel_for(t, [&](std::size_t i) {
        const auto idx = static_cast<Eigen::Index>(i);
        const auto& c = caches[i];
        const Vector b = out.b.col(idx);
        const Vector grad = (c.gram * (out.u + b) - c.xty) / c.samples;
        out.b.col(idx) = iht_step(c, b, grad, delta, cfg.k);
      });
    }
    Vector rhs = pooled_rhs;
    for (std::size_t i = 0; i < t; ++i) rhs.noalias() -= caches[i].gram * out.b.col(static_cast<Eigen::Index>(i));
    out.u = pooled_factor.solve(rhs);

    const double gamma_next = 2.0 * beta + (2.0 * cfg.c1 / root_k) * tau + 2.0 * cfg.c1 * gamma;
    gamma = gamma_next;
    tau = cfg.c2 * root_k * gamma;
    beta = cfg.c3 * gamma;
    alpha = root_k * gamma;

    IterationRecord rec;
    rec.iteration = ell;
    rec.delta = delta;
    double sse = 0.0;
    double samples = 0.0;
    std::size_t nnz = 0;
    for (std::size_t i = 0; i < t; ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      sse += (datasets[i].x * (out.u + out.b.col(idx)) - datasets[i].y).squaredNorm();
      samples += static_cast<double>(datasets[i].samples());
      nnz = std::max<std::size_t>(nnz, static_cast<std::size_t>((out.b.col(idx).array() != 0.0).count()));
    }
    rec.train_mse = sse / samples;
    rec.max_nonzeros = nnz;
    if (options.truth && out.u.norm() > 0.0) {
      const Vector dir = out.u.normalized();
      const Matrix& ref = options.truth->u_star;
      rec.subspace_dist = (dir - ref * (ref.transpose() * dir)).norm();
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.report.records.push_back(rec);
    if (options.on_iteration) options.on_iteration(rec);
    if (options.on_state) options.on_state(ell, out.u, out.b);
  }
  return out;
}

ModelState to_model_state(const Rank1Result& fit) {
  const auto d = fit.u.size();
  const auto t = fit.b.cols();
  ModelState s;
  const double norm = fit.u.norm();
  s.u = Matrix::Zero(d, 1);
  if (norm > 0.0) {
    s.u.col(0) = fit.u / norm;
  } else if (d > 0) {
    s.u(0, 0) = 1.0;
  }
  s.w = Matrix::Constant(t, 1, norm);
  s.b = fit.b;
  s.iteration = fit.report.records.size();
  return s;
}

} // namespace lrs
