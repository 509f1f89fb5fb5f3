#include "lrs/solver_amht.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "lrs/adapt.hpp"
#include "lrs/datagen.hpp"
#include "lrs/errors.hpp"
#include "lrs/eval.hpp"
#include "lrs/numerics.hpp"
#include "lrs/parallel.hpp"

namespace lrs {

namespace {
// A gradient step is halved while the move's curvature (in units of the
// unit step) exceeds this; the plain unit step diverges when m is small.
constexpr double kMaxStepCurvature = 1.5;
constexpr int kMaxStepHalvings = 60;
} // namespace

Vector iht_step(const TaskCache& cache, const Vector& b, const Vector& grad, double delta, int k) {
  double step = 1.0;
  Vector next;
  for (int tries = 0; tries < kMaxStepHalvings; ++tries) {
    next = hard_threshold(b - step * grad, delta);
    if (k > 0) next = keep_largest(next, k);
    const Vector move = next - b;
    const double sq = move.squaredNorm();
    if (sq == 0.0) break;
    const double curv = move.dot(cache.gram * move) / cache.samples;
    if (step * curv <= kMaxStepCurvature * sq) break;
    step *= 0.5;
  }
  return next;
}

Vector optimize_sparse_vector(const TaskCache& cache, const Vector& v, const Vector& b0,
                              double alpha, double beta, double gamma, int iters, double c1,
                              int k, double* last_delta) {
  if (v.size() != cache.gram.rows() || b0.size() != cache.gram.rows()) {
    throw DomainError("optimize_sparse_vector: dimension mismatch");
  }
  if (iters < 0) throw DomainError("optimize_sparse_vector: iters must be nonnegative");
  const double root_k = std::sqrt(static_cast<double>(std::max(k, 1)));
  const Vector gv = cache.gram * v - cache.xty;
  Vector b = b0;
  for (int round = 0; round < iters; ++round) {
    const Vector grad = (cache.gram * b + gv) / cache.samples;
    const double delta = alpha + c1 * (gamma + beta / root_k);
    Vector next = iht_step(cache, b, grad, delta, k);
    b = std::move(next);
    gamma = 2.0 * c1 * gamma + 2.0 * (alpha + c1 * beta / root_k);
    if (last_delta) *last_delta = delta;
  }
  return b;
}

Vector optimize_sparse_vector(const TaskDataset& data, const Vector& v, const Vector& b0,
                              double alpha, double beta, double gamma, int iters, double c1,
                              int k, double* last_delta) {
  return optimize_sparse_vector(TaskCache::from(data), v, b0, alpha, beta, gamma, iters, c1, k,
                                last_delta);
}

Vector update_w(const TaskCache& cache, const Matrix& u, const Vector& b, double ridge_eps) {
  const Matrix gu = cache.gram * u;
  const Matrix normal = u.transpose() * gu;
  const Vector rhs = u.transpose() * (cache.xty - cache.gram * b);
  return solve_normal_equations(normal, rhs, ridge_eps);
}

Vector update_w(const TaskDataset& data, const Matrix& u, const Vector& b, double ridge_eps) {
  if (u.rows() != static_cast<Eigen::Index>(data.dim()) || b.size() != u.rows()) {
    throw DomainError("update_w: dimension mismatch");
  }
  const Matrix xu = data.x * u;
  return least_squares(xu, data.y - data.x * b, ridge_eps);
}

Matrix update_u(std::span<const TaskCache> caches, const Matrix& w, const Matrix& b) {
  if (caches.empty()) throw DomainError("update_u: need at least one task");
  const auto d = caches.front().gram.rows();
  const auto r = w.cols();
  if (w.rows() != static_cast<Eigen::Index>(caches.size()) || b.rows() != d ||
      b.cols() != w.rows()) {
    throw DomainError("update_u: dimension mismatch");
  }
  std::vector<std::reference_wrapper<const Matrix>> grams;
  grams.reserve(caches.size());
  Matrix rhs = Matrix::Zero(d, r);
  for (std::size_t i = 0; i < caches.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    grams.emplace_back(caches[i].gram);
    rhs.noalias() += (caches[i].xty - caches[i].gram * b.col(idx)) * w.row(idx);
  }
  StructuredSystem sys{std::move(grams), w, rhs, Matrix(), 1.0};
  return solve_structured(sys);
}

Matrix update_u(std::span<const TaskDataset> datasets, const Matrix& w, const Matrix& b) {
  return update_u(std::span<const TaskCache>(build_caches(datasets)), w, b);
}

double training_objective(std::span<const TaskDataset> datasets, const ModelState& state) {
  std::vector<double> per(datasets.size());
  parallel_for(datasets.size(), [&](std::size_t i) {
    per[i] = 0.5 * (datasets[i].x * state.theta(i) - datasets[i].y).squaredNorm();
  });
  double total = 0.0;
  for (double v : per) total += v;
  return total;
}

double training_mse(std::span<const TaskDataset> datasets, const ModelState& state) {
  double samples = 0.0;
  for (const auto& d : datasets) samples += static_cast<double>(d.samples());
  return 2.0 * training_objective(datasets, state) / samples;
}

int inner_iterations(int ell, double gamma_prev, const SolverConfig& cfg) {
  const double ratio = std::max(gamma_prev / cfg.eps, 2.0);
  const double t = std::ceil(static_cast<double>(ell) * std::log(ratio));
  return static_cast<int>(std::min<double>(cfg.inner_cap, std::max(1.0, t)));
}

namespace {

void check_datasets(std::span<const TaskDataset> datasets, const SolverConfig& cfg) {
  if (datasets.empty()) throw ConfigError("fit: need at least one task");
  const auto d = datasets.front().dim();
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    if (datasets[i].dim() != d) {
      throw ConfigError("fit: task " + std::to_string(i) + " has dimension " +
                        std::to_string(datasets[i].dim()) + ", expected " + std::to_string(d));
    }
  }
  if (static_cast<std::size_t>(cfg.r) > d) throw ConfigError("fit: r exceeds d");
  if (static_cast<std::size_t>(cfg.k) > d) throw ConfigError("fit: k exceeds d");
  if (datasets.size() < static_cast<std::size_t>(cfg.r)) {
    throw ConfigError("fit: need t >= r tasks");
  }
}

struct Batches {
  std::vector<std::vector<TaskDataset>> data;
  std::vector<std::vector<TaskCache>> caches;
};

} // namespace

FitResult fit_with_u_step(std::span<const TaskDataset> datasets, const SolverConfig& cfg,
                          const FitOptions& options, const UStep& u_step) {
  cfg.validate();
  check_datasets(datasets, cfg);
  const auto d = static_cast<Eigen::Index>(datasets.front().dim());
  const auto t = datasets.size();
  const int r = cfg.r;

  Batches batches;
  if (cfg.batching == Batching::split && cfg.outer_iters > 0) {
    batches.data = split_rows(datasets, 3 * cfg.outer_iters);
  } else {
    batches.data.emplace_back(datasets.begin(), datasets.end());
  }
  for (const auto& chunk : batches.data) batches.caches.push_back(build_caches(chunk));
  auto batch = [&](int ell, int step) -> std::size_t {
    return cfg.batching == Batching::split ? static_cast<std::size_t>(3 * (ell - 1) + step) : 0;
  };

  ModelState state;
  if (options.init_u) {
    const Matrix& u0 = *options.init_u;
    if (u0.rows() != d || u0.cols() != r) throw ConfigError("fit: init_u must be d x r");
    if (frobenius_orthonormality_defect(u0) > 1e-8) {
      throw ConfigError("fit: init_u must have orthonormal columns");
    }
    state.u = u0;
  } else {
    state.u = mom_init(datasets, r);
  }
  state.b = Matrix::Zero(d, static_cast<Eigen::Index>(t));
  state.w = Matrix::Zero(static_cast<Eigen::Index>(t), r);
  {
    const auto& caches = batches.caches[batch(1, 1)];
    parallel_for(t, [&](std::size_t i) {
      state.w.row(static_cast<Eigen::Index>(i)) =
          update_w(caches[i], state.u, state.b.col(static_cast<Eigen::Index>(i)), cfg.ridge_eps)
              .transpose();
    });
  }

  double bound = cfg.init_bound;
  double gamma = cfg.gamma0;
  if (options.truth && options.bounds_from_truth) {
    const auto inc = measure_incoherence(*options.truth);
    if (inc.lambda_1 > 0.0) bound = std::sqrt(inc.lambda_r / inc.lambda_1);
    gamma = options.truth->b_star.cwiseAbs().maxCoeff();
  }
  const double gamma_seed = gamma;
  const double root_k = std::sqrt(static_cast<double>(std::max(cfg.k, 1)));

  FitResult result;
  for (int ell = 1; ell <= cfg.outer_iters; ++ell) {
    const auto start = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.iteration = ell;

    if (cfg.k > 0) {
      const int inner = inner_iterations(ell, gamma, cfg);
      const double alpha = std::pow(cfg.c4, ell - 1) * bound / root_k;
      const double beta = std::pow(cfg.c5, ell - 1) * bound;
      const auto& caches = batches.caches[batch(ell, 0)];
      std::vector<double> deltas(t, 0.0);
      parallel_for(t, [&](std::size_t i) {
        const auto idx = static_cast<Eigen::Index>(i);
        const Vector v = state.u * state.w.row(idx).transpose();
        state.b.col(idx) = optimize_sparse_vector(caches[i], v, state.b.col(idx), alpha, beta,
                                                  gamma, inner, cfg.c1, cfg.k, &deltas[i]);
      });
      rec.delta = deltas.front();
    }
    if (options.on_block) options.on_block("b", state);

    {
      const auto& caches = batches.caches[batch(ell, 1)];
      parallel_for(t, [&](std::size_t i) {
        const auto idx = static_cast<Eigen::Index>(i);
        state.w.row(idx) = update_w(caches[i], state.u, state.b.col(idx), cfg.ridge_eps).transpose();
      });
    }
    if (options.on_block) options.on_block("w", state);

    const std::size_t ub = batch(ell, 2);
    const Matrix u_pre = u_step(batches.data[ub], batches.caches[ub], state.w, state.b, ell);
    const QrResult qr = qr_orthonormalize(u_pre);
    const double moved = (qr.q - state.u * (state.u.transpose() * qr.q)).norm();
    state.u = qr.q;
    if (options.refit_w_after_u) {
      const auto& caches = batches.caches[batch(ell, 1)];
      parallel_for(t, [&](std::size_t i) {
        const auto idx = static_cast<Eigen::Index>(i);
        state.w.row(idx) = update_w(caches[i], state.u, state.b.col(idx), cfg.ridge_eps).transpose();
      });
    } else {
      // Re-express w in the new basis so U w is unchanged by the QR step.
      state.w = state.w * qr.r_factor.transpose();
    }
    state.iteration = static_cast<std::size_t>(ell);
    if (options.on_block) options.on_block("u", state);

    gamma = std::pow(cfg.c3, ell) * gamma_seed;

    rec.train_mse = training_mse(datasets, state);
    rec.max_nonzeros = state.max_nonzeros();
    if (options.truth) rec.subspace_dist = subspace_distance(state.u, options.truth->u_star);
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.report.records.push_back(rec);
    if (options.on_iteration) options.on_iteration(rec);
    if (moved < cfg.stop_tol) break;
  }
  result.state = std::move(state);
  return result;
}

FitResult fit(std::span<const TaskDataset> datasets, const SolverConfig& cfg,
              const FitOptions& options) {
  return fit_with_u_step(datasets, cfg, options,
                         [](std::span<const TaskDataset>, std::span<const TaskCache> caches,
                            const Matrix& w, const Matrix& b,
                            int) { return update_u(caches, w, b); });
}

} // namespace lrs
