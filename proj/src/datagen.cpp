#include "lrs/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lrs/errors.hpp"
#include "lrs/numerics.hpp"
#include "lrs/parallel.hpp"
#include "lrs/rng.hpp"

namespace lrs {

void GenConfig::validate() const {
  if (d < 1) throw ConfigError("gen: d must be positive");
  if (r < 1) throw ConfigError("gen: r must be positive");
  if (t < 1) throw ConfigError("gen: t must be positive");
  if (m < 1) throw ConfigError("gen: m must be positive");
  if (k < 0 || zeta < 0) throw ConfigError("gen: k and zeta must be nonnegative");
  if (r > d) throw ConfigError("gen: invariant r <= d violated (r=" + std::to_string(r) +
                               ", d=" + std::to_string(d) + ")");
  if (k > d) throw ConfigError("gen: invariant k <= d violated (k=" + std::to_string(k) +
                               ", d=" + std::to_string(d) + ")");
  if (zeta > t) throw ConfigError("gen: invariant zeta <= t violated (zeta=" +
                                  std::to_string(zeta) + ", t=" + std::to_string(t) + ")");
  if (sigma < 0.0) throw ConfigError("gen: sigma must be nonnegative");
  if (!(w_scale > 0.0)) throw ConfigError("gen: w_scale must be positive");
}

namespace {

std::vector<int> column_demands(const GenConfig& cfg, KeyedStream& rng) {
  const long long slots = static_cast<long long>(cfg.d) * cfg.zeta;
  const long long wanted = static_cast<long long>(cfg.t) * cfg.k;
  std::vector<int> demand(static_cast<std::size_t>(cfg.t), cfg.k);
  if (wanted <= slots) return demand;
  if (cfg.support == SupportMode::exact) {
    throw InfeasibleSparsity("gen: t*k = " + std::to_string(wanted) + " exceeds d*zeta = " +
                             std::to_string(slots) + "; no support assignment exists");
  }
  const auto base = static_cast<int>(slots / cfg.t);
  auto extra = static_cast<std::size_t>(slots % cfg.t);
  std::fill(demand.begin(), demand.end(), base);
  std::vector<std::size_t> order(demand.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  for (std::size_t j = 0; j < extra; ++j) demand[order[j]] += 1;
  return demand;
}

// Random greedy: each column draws rows uniformly, rejecting saturated or
// repeated rows; a column that stalls for 10*d draws restarts. Returns false
// when fewer unsaturated rows remain than a column needs.
bool random_supports(const std::vector<int>& demand, int d, int zeta, KeyedStream& rng,
                     std::vector<std::vector<int>>& supports) {
  std::vector<int> capacity(static_cast<std::size_t>(d), zeta);
  supports.assign(demand.size(), {});
  for (std::size_t col = 0; col < demand.size(); ++col) {
    const int need = demand[col];
    const auto open = std::count_if(capacity.begin(), capacity.end(), [](int c) { return c > 0; });
    if (open < need) return false;
    std::vector<char> taken(static_cast<std::size_t>(d), 0);
    std::vector<int>& chosen = supports[col];
    int restarts = 0;
    long long attempts = 0;
    while (static_cast<int>(chosen.size()) < need) {
      const auto row = static_cast<int>(rng.below(static_cast<std::uint64_t>(d)));
      if (capacity[row] > 0 && !taken[row]) {
        taken[row] = 1;
        chosen.push_back(row);
      }
      if (++attempts > 10LL * d && static_cast<int>(chosen.size()) < need) {
        if (++restarts > 10) return false;
        chosen.clear();
        std::fill(taken.begin(), taken.end(), 0);
        attempts = 0;
      }
    }
    std::sort(chosen.begin(), chosen.end());
    for (int row : chosen) --capacity[row];
  }
  return true;
}

// Fallback that always succeeds when the budgets are feasible: each column
// takes the rows with the most remaining capacity, ties broken at random.
void balanced_supports(const std::vector<int>& demand, int d, int zeta, KeyedStream& rng,
                       std::vector<std::vector<int>>& supports) {
  std::vector<int> capacity(static_cast<std::size_t>(d), zeta);
  supports.assign(demand.size(), {});
  std::vector<int> rows(static_cast<std::size_t>(d));
  std::vector<std::uint64_t> tie(static_cast<std::size_t>(d));
  for (std::size_t col = 0; col < demand.size(); ++col) {
    std::iota(rows.begin(), rows.end(), 0);
    for (auto& v : tie) v = rng.next_bits();
    std::sort(rows.begin(), rows.end(), [&](int a, int b) {
      if (capacity[a] != capacity[b]) return capacity[a] > capacity[b];
      return tie[a] < tie[b];
    });
    auto& chosen = supports[col];
    chosen.assign(rows.begin(), rows.begin() + demand[col]);
    std::sort(chosen.begin(), chosen.end());
    for (int row : chosen) --capacity[row];
  }
}

} // namespace

GroundTruth gen_ground_truth(const GenConfig& cfg) {
  cfg.validate();
  GroundTruth gt;
  gt.sigma = cfg.sigma;
  gt.k = cfg.k;
  gt.zeta = cfg.zeta;

  KeyedStream sub(cfg.seed, streams::subspace);
  Matrix g(cfg.d, cfg.r);
  for (Eigen::Index j = 0; j < g.cols(); ++j) {
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = sub.gaussian();
  }
  gt.u_star = qr_orthonormalize(g).q;

  gt.w_star.resize(cfg.t, cfg.r);
  for (int i = 0; i < cfg.t; ++i) {
    KeyedStream ws(cfg.seed, streams::weights + static_cast<std::uint64_t>(i));
    for (int a = 0; a < cfg.r; ++a) {
      gt.w_star(i, a) = cfg.weights == WeightMode::ones ? 1.0 : cfg.w_scale * ws.gaussian();
    }
  }

  KeyedStream sup(cfg.seed, streams::support);
  const auto demand = column_demands(cfg, sup);
  std::vector<std::vector<int>> supports;
  if (!random_supports(demand, cfg.d, cfg.zeta, sup, supports)) {
    balanced_supports(demand, cfg.d, cfg.zeta, sup, supports);
  }
  gt.b_star = Matrix::Zero(cfg.d, cfg.t);
  for (int i = 0; i < cfg.t; ++i) {
    KeyedStream vals(cfg.seed, streams::values + static_cast<std::uint64_t>(i));
    for (int row : supports[static_cast<std::size_t>(i)]) gt.b_star(row, i) = vals.gaussian();
  }
  return gt;
}

std::vector<TaskDataset> gen_samples(const GroundTruth& gt, int m, std::uint64_t seed) {
  if (m < 1) throw DomainError("gen_samples: m must be positive");
  const auto t = gt.tasks();
  const auto d = static_cast<Eigen::Index>(gt.dim());
  std::vector<TaskDataset> out(t);
  parallel_for(t, [&](std::size_t i) {
    KeyedStream rng(seed, streams::samples + i);
    Matrix x(m, d);
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index c = 0; c < d; ++c) x(j, c) = rng.gaussian();
    }
    Vector y = x * gt.theta(i);
    if (gt.sigma > 0.0) {
      for (Eigen::Index j = 0; j < m; ++j) y[j] += gt.sigma * rng.gaussian();
    }
    out[i] = TaskDataset(std::move(x), std::move(y));
  });
  return out;
}

IncoherenceReport measure_incoherence(const GroundTruth& gt) {
  IncoherenceReport rep;
  const auto r = static_cast<double>(gt.rank());
  const auto t = static_cast<double>(gt.tasks());
  const auto d = static_cast<double>(gt.dim());
  const Matrix diversity = (r / t) * (gt.w_star.transpose() * gt.w_star);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(diversity, Eigen::EigenvaluesOnly);
  rep.lambda_1 = eig.eigenvalues().maxCoeff();
  rep.lambda_r = eig.eigenvalues().minCoeff();
  rep.u_two_inf = gt.u_star.rowwise().norm().maxCoeff();
  rep.w_two_inf = gt.w_star.rowwise().norm().maxCoeff();
  const double mu_w = rep.lambda_r > 0.0 ? rep.w_two_inf * rep.w_two_inf / rep.lambda_r
                                         : std::numeric_limits<double>::infinity();
  const double mu_u = rep.u_two_inf * rep.u_two_inf * d / r;
  rep.mu_star = std::max(mu_w, mu_u);
  rep.w_incoherence = rep.w_two_inf / std::sqrt(rep.mu_star * rep.lambda_r);
  rep.u_incoherence = rep.u_two_inf * std::sqrt(d / (rep.mu_star * r));
  for (Eigen::Index j = 0; j < gt.b_star.rows(); ++j) {
    rep.max_row_nonzeros = std::max<int>(rep.max_row_nonzeros,
                                         static_cast<int>((gt.b_star.row(j).array() != 0.0).count()));
  }
  for (Eigen::Index i = 0; i < gt.b_star.cols(); ++i) {
    rep.max_col_nonzeros = std::max<int>(rep.max_col_nonzeros,
                                         static_cast<int>((gt.b_star.col(i).array() != 0.0).count()));
  }
  return rep;
}

} // namespace lrs
