#include "doctest.h"
#include "helpers.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include "lrs/datagen.hpp"
#include "lrs/errors.hpp"
#include "lrs/eval.hpp"
#include "lrs/numerics.hpp"
#include "lrs/solver_amht.hpp"

using namespace lrs;
using namespace lrs::test;

namespace {

GenConfig desk_config(std::uint64_t seed) {
  GenConfig g;
  g.d = 50;
  g.r = 2;
  g.t = 200;
  g.m = 75;
  g.k = 5;
  g.zeta = 10;
  g.seed = seed;
  g.support = SupportMode::capped;
  return g;
}

SolverConfig desk_solver() {
  SolverConfig c;
  c.r = 2;
  c.k = 5;
  c.outer_iters = 15;
  return c;
}

// Objective (1/2) sum ||X(U w + b) - y||^2 written with explicit loops over tasks.
double objective_oracle(std::span<const TaskDataset> data, const ModelState& s) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    const Vector theta = s.u * s.w.row(idx).transpose() + s.b.col(idx);
    total += 0.5 * (data[i].x * theta - data[i].y).squaredNorm();
  }
  return total;
}

template <class F>
void with_threads(const char* value, F&& body) {
  const char* old = std::getenv("LRS_THREADS");
  const std::string saved = old ? old : "";
  ::setenv("LRS_THREADS", value, 1);
  body();
  if (old) ::setenv("LRS_THREADS", saved.c_str(), 1);
  else ::unsetenv("LRS_THREADS");
}

} // namespace

TEST_SUITE("solver_amht") {

TEST_CASE("zero inner rounds return the start") {
  const auto data = random_tasks(1, 10, 6, 1);
  const Vector b0 = gaussian_vector(6, 2);
  CHECK(optimize_sparse_vector(data[0], Vector::Zero(6), b0, 0.1, 0.1, 0.1, 0, 0.25, 2) == b0);
}

TEST_CASE("exact shared part and no correction is a fixed point") {
  GenConfig g;
  g.d = 12;
  g.r = 2;
  g.t = 1;
  g.k = 0;
  g.seed = 3;
  const GroundTruth gt = gen_ground_truth(g);
  const auto data = gen_samples(gt, 30, 1);
  const Vector v = gt.u_star * gt.w_star.row(0).transpose();
  const Vector b = optimize_sparse_vector(data[0], v, Vector::Zero(12), 0.0, 0.0, 0.5, 10, 0.25, 3);
  CHECK(b.isZero(0.0));
}

TEST_CASE("inner loop recovers a planted sparse vector") {
  GenConfig g;
  g.d = 30;
  g.r = 2;
  g.t = 1;
  g.k = 3;
  g.zeta = 1;
  g.seed = 12;
  g.support = SupportMode::exact;
  const GroundTruth gt = gen_ground_truth(g);
  const auto data = gen_samples(gt, 300, 13);
  const Vector v = gt.u_star * gt.w_star.row(0).transpose();
  const Vector bstar = gt.b_star.col(0);
  const double gamma0 = bstar.cwiseAbs().maxCoeff();
  const Vector b = optimize_sparse_vector(data[0], v, Vector::Zero(30), 0.0, 0.0, gamma0, 25, 0.25, 3);
  CHECK((b - bstar).cwiseAbs().maxCoeff() <= 1e-6);
  for (Eigen::Index j = 0; j < 30; ++j) {
    if (bstar(j) == 0.0) CHECK(b(j) == 0.0);
  }
}

TEST_CASE("iht_step keeps at most k entries") {
  const auto data = random_tasks(1, 40, 20, 5);
  const TaskCache cache = TaskCache::from(data[0]);
  const Vector b = Vector::Zero(20);
  const Vector grad = -(cache.xty) / cache.samples;
  const Vector out = iht_step(cache, b, grad, 0.0, 4);
  CHECK((out.array() != 0.0).count() <= 4);
}

TEST_CASE("update_w recovers the planted weights") {
  GenConfig g;
  g.d = 15;
  g.r = 3;
  g.t = 4;
  g.k = 2;
  g.zeta = 2;
  g.seed = 4;
  const GroundTruth gt = gen_ground_truth(g);
  const auto data = gen_samples(gt, 10, 5);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    const Vector w = update_w(data[i], gt.u_star, gt.b_star.col(idx), 0.0);
    CHECK((w - gt.w_star.row(idx).transpose()).norm() <= 1e-10);
  }
}

TEST_CASE("update_w rank one closed form") {
  const auto data = random_tasks(1, 12, 5, 6);
  const Matrix e1 = Matrix::Identity(5, 1);
  const Vector b = gaussian_vector(5, 7);
  const Vector resid = data[0].y - data[0].x * b;
  const double expect =
      data[0].x.col(0).dot(resid) / data[0].x.col(0).squaredNorm();
  CHECK(std::abs(update_w(data[0], e1, b, 0.0)(0) - expect) <= 1e-12);
}

TEST_CASE("update_w matches the pseudo-inverse oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto data = random_tasks(1, 9, 8, 20 + seed);
    const Matrix u = random_orthonormal(8, 3, 30 + seed);
    const Vector b = gaussian_vector(8, 40 + seed);
    const Matrix xu = data[0].x * u;
    const Vector oracle = xu.completeOrthogonalDecomposition().pseudoInverse() *
                          (data[0].y - data[0].x * b);
    CHECK((update_w(data[0], u, b, 0.0) - oracle).norm() <= 1e-10);
    const TaskCache cache = TaskCache::from(data[0]);
    CHECK((update_w(cache, u, b, 0.0) - oracle).norm() <= 1e-10);
  }
}

TEST_CASE("update_w with too few samples is singular") {
  const auto data = random_tasks(1, 2, 8, 3);
  CHECK_THROWS_AS(update_w(data[0], random_orthonormal(8, 3, 1), Vector::Zero(8), 0.0),
                  SingularSystem);
}

TEST_CASE("update_u recovers the planted subspace") {
  GenConfig g;
  g.d = 20;
  g.r = 2;
  g.t = 10;
  g.k = 2;
  g.zeta = 2;
  g.seed = 8;
  const GroundTruth gt = gen_ground_truth(g);
  const auto data = gen_samples(gt, 15, 9);
  const Matrix u = update_u(data, gt.w_star, gt.b_star);
  CHECK(subspace_distance(qr_orthonormalize(u).q, gt.u_star) <= 1e-8);
}

TEST_CASE("update_u with zero weights is singular") {
  const auto data = random_tasks(3, 10, 4, 1);
  CHECK_THROWS_AS(update_u(data, Matrix::Zero(3, 2), Matrix::Zero(4, 3)), SingularSystem);
}

TEST_CASE("update_u matches the dense Kronecker oracle") {
  const int d = 6, r = 2, t = 3;
  const auto data = random_tasks(t, 7, d, 50);
  const Matrix w = gaussian_matrix(t, r, 51);
  const Matrix b = gaussian_matrix(d, t, 52);
  Matrix a = Matrix::Zero(d * r, d * r);
  Matrix v = Matrix::Zero(d, r);
  for (int i = 0; i < t; ++i) {
    const Matrix wi = w.row(i).transpose();
    a += kron(wi * wi.transpose(), data[i].x.transpose() * data[i].x);
    v += data[i].x.transpose() * (data[i].y - data[i].x * b.col(i)) * wi.transpose();
  }
  const Matrix oracle = unvec(a.fullPivLu().solve(vec(v)), d, r);
  CHECK((update_u(data, w, b) - oracle).norm() <= 1e-8 * oracle.norm());
}

TEST_CASE("update_u minimizes the objective over U") {
  const auto data = random_tasks(4, 10, 5, 60);
  ModelState s;
  s.w = gaussian_matrix(4, 2, 61);
  s.b = gaussian_matrix(5, 4, 62);
  s.u = update_u(data, s.w, s.b);
  const double best = objective_oracle(data, s);
  for (std::uint64_t k = 0; k < 5; ++k) {
    ModelState p = s;
    p.u += 1e-3 * gaussian_matrix(5, 2, 70 + k);
    CHECK(objective_oracle(data, p) >= best - 1e-9);
  }
  CHECK(std::abs(training_objective(data, s) - best) <= 1e-9 * best);
}

TEST_CASE("noiseless desk fit recovers the planted model") {
  const GroundTruth gt = gen_ground_truth(desk_config(1));
  const auto data = gen_samples(gt, 75, 1001);
  FitOptions o;
  o.truth = &gt;
  const FitResult res = fit(data, desk_solver(), o);
  const RecoveryErrors e = recovery_errors(res.state, gt);
  CHECK(e.subspace_dist <= 1e-3);
  CHECK(e.max_b_inf <= 1e-3);
  CHECK(res.report.records.size() == 15);

  // Subspace distance does not increase after iteration 2.
  const auto& recs = res.report.records;
  for (std::size_t l = 2; l < recs.size(); ++l) {
    CHECK(recs[l].subspace_dist <= recs[l - 1].subspace_dist + 1e-6);
  }
}

TEST_CASE("k = 0 keeps the sparse part at zero") {
  const GroundTruth gt = gen_ground_truth(desk_config(2));
  const auto data = gen_samples(gt, 75, 2);
  SolverConfig c = desk_solver();
  c.k = 0;
  c.outer_iters = 4;
  const FitResult res = fit(data, c);
  CHECK(res.state.b.isZero(0.0));
  CHECK(res.report.records.size() == 4);
}

TEST_CASE("zero outer iterations return the initialization") {
  const auto data = random_tasks(5, 20, 6, 3);
  const Matrix u0 = random_orthonormal(6, 2, 4);
  SolverConfig c;
  c.r = 2;
  c.k = 1;
  c.outer_iters = 0;
  FitOptions o;
  o.init_u = u0;
  const FitResult res = fit(data, c, o);
  CHECK(res.state.u == u0);
  CHECK(res.state.b.isZero(0.0));
  CHECK(res.report.records.empty());
}

TEST_CASE("orthonormality and block descent hold every iteration") {
  GenConfig g = desk_config(3);
  g.sigma = 0.05;
  const GroundTruth gt = gen_ground_truth(g);
  const auto data = gen_samples(gt, 75, 3);
  FitOptions o;
  o.truth = &gt;
  double after_b = 0.0, after_w = 0.0;
  int u_steps = 0;
  o.on_block = [&](const char* stage, const ModelState& s) {
    const std::string st = stage;
    const double obj = objective_oracle(data, s);
    if (st == "b") {
      after_b = obj;
    } else if (st == "w") {
      after_w = obj;
      CHECK(after_w <= after_b + 1e-9 * std::max(1.0, after_b));
    } else {
      ++u_steps;
      CHECK(frobenius_orthonormality_defect(s.u) <= 1e-8);
      CHECK(obj <= after_w + 1e-9 * std::max(1.0, after_w));
    }
  };
  fit(data, desk_solver(), o);
  CHECK(u_steps == 15);
}

TEST_CASE("fit trace is invariant to rotating the initialization") {
  const GroundTruth gt = gen_ground_truth(desk_config(4));
  const auto data = gen_samples(gt, 75, 4);
  const Matrix u0 = random_orthonormal(50, 2, 5);
  const Matrix q = random_orthonormal(2, 2, 6);
  FitOptions a, b;
  a.truth = b.truth = &gt;
  a.init_u = u0;
  b.init_u = Matrix(u0 * q);
  SolverConfig c = desk_solver();
  c.outer_iters = 8;
  const FitResult ra = fit(data, c, a);
  const FitResult rb = fit(data, c, b);
  REQUIRE(ra.report.records.size() == rb.report.records.size());
  for (std::size_t l = 0; l < ra.report.records.size(); ++l) {
    const double x = ra.report.records[l].train_mse, y = rb.report.records[l].train_mse;
    CHECK(std::abs(x - y) <= 1e-8 * std::max(1.0, std::abs(x)));
  }
}

TEST_CASE("fit is independent of the thread count") {
  const GroundTruth gt = gen_ground_truth(desk_config(5));
  const auto data = gen_samples(gt, 75, 5);
  SolverConfig c = desk_solver();
  c.outer_iters = 5;
  FitResult one, many;
  with_threads("1", [&] { one = fit(data, c); });
  with_threads("3", [&] { many = fit(data, c); });
  CHECK(one.state.u == many.state.u);
  CHECK(one.state.w == many.state.w);
  CHECK(one.state.b == many.state.b);
}

TEST_CASE("split batching runs on disjoint row chunks") {
  GenConfig g = desk_config(6);
  g.t = 50;
  g.d = 20;
  g.k = 2;
  g.zeta = 5;
  const GroundTruth gt = gen_ground_truth(g);
  const auto data = gen_samples(gt, 600, 6);
  SolverConfig c = desk_solver();
  c.k = 2;
  c.outer_iters = 4;
  c.batching = Batching::split;
  FitOptions o;
  o.truth = &gt;
  const FitResult res = fit(data, c, o);
  CHECK(frobenius_orthonormality_defect(res.state.u) <= 1e-8);
  CHECK(res.report.records.size() == 4);
  CHECK(res.report.records.back().subspace_dist < res.report.records.front().subspace_dist);
}

TEST_CASE("inconsistent inputs are rejected") {
  auto data = random_tasks(3, 10, 6, 1);
  SolverConfig c;
  c.r = 2;
  c.k = 1;
  FitOptions o;
  o.init_u = Matrix(Matrix::Ones(6, 2));
  CHECK_THROWS_AS(fit(data, c, o), ConfigError);
  data.push_back(random_tasks(1, 10, 5, 2)[0]);
  CHECK_THROWS_AS(fit(data, c), ConfigError);
}

TEST_CASE("inner iteration schedule") {
  SolverConfig c;
  c.eps = 1e-4;
  c.inner_cap = 50;
  CHECK(inner_iterations(1, 1.0, c) == static_cast<int>(std::ceil(std::log(1e4))));
  CHECK(inner_iterations(3, 1.0, c) == static_cast<int>(std::ceil(3.0 * std::log(1e4))));
  CHECK(inner_iterations(20, 1.0, c) == 50);
  CHECK(inner_iterations(1, 1e-9, c) == static_cast<int>(std::ceil(std::log(2.0))));
}

} // TEST_SUITE
