#include "doctest.h"
#include "helpers.hpp"

#include <cmath>

#include "lrs/datagen.hpp"
#include "lrs/errors.hpp"
#include "lrs/eval.hpp"

using namespace lrs;
using namespace lrs::test;

namespace {

ModelState state_of(const GroundTruth& gt) {
  ModelState s;
  s.u = gt.u_star;
  s.w = gt.w_star;
  s.b = gt.b_star;
  return s;
}

GroundTruth small_truth(std::uint64_t seed, double sigma = 0.0) {
  GenConfig g;
  g.d = 15;
  g.r = 2;
  g.t = 8;
  g.k = 2;
  g.zeta = 3;
  g.sigma = sigma;
  g.seed = seed;
  g.support = SupportMode::exact;
  return gen_ground_truth(g);
}

} // namespace

TEST_SUITE("eval") {

TEST_CASE("subspace distance examples") {
  const Matrix u = random_orthonormal(10, 3, 1);
  CHECK(subspace_distance(u, u) <= 1e-12);
  const Matrix q = random_orthonormal(3, 3, 2);
  CHECK(subspace_distance(u * q, u) <= 1e-12);
  const Matrix e = Matrix::Identity(6, 6);
  CHECK(std::abs(subspace_distance(e.leftCols(2), e.rightCols(2)) - std::sqrt(2.0)) <= 1e-14);
}

TEST_CASE("subspace distance is symmetric") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix a = random_orthonormal(12, 3, 10 + seed);
    const Matrix b = random_orthonormal(12, 3, 30 + seed);
    CHECK(std::abs(subspace_distance(a, b) - subspace_distance(b, a)) <= 1e-10);
  }
}

TEST_CASE("subspace distance rejects non-orthonormal input") {
  const Matrix u = random_orthonormal(5, 2, 1);
  CHECK_THROWS_AS(subspace_distance(2.0 * u, u), DomainError);
  CHECK_THROWS_AS(subspace_distance(u, 2.0 * u), DomainError);
}

TEST_CASE("recovery errors of the planted state") {
  const GroundTruth gt = small_truth(1);
  const RecoveryErrors e = recovery_errors(state_of(gt), gt);
  CHECK(e.subspace_dist <= 1e-12);
  CHECK(e.max_b_inf == 0.0);
  CHECK(e.max_theta_l2 == 0.0);
  CHECK(e.support_precision == 1.0);
  CHECK(e.support_recall == 1.0);
  ModelState zero_b = state_of(gt);
  zero_b.b.setZero();
  CHECK(recovery_errors(zero_b, gt).support_recall == 0.0);
}

TEST_CASE("recovery errors match a naive re-implementation") {
  const GroundTruth gt = small_truth(2);
  ModelState s;
  s.u = random_orthonormal(15, 2, 3);
  s.w = gaussian_matrix(8, 2, 4);
  s.b = gt.b_star;
  s.b(0, 0) += 0.5;
  s.b(14, 7) = 1.0;
  const RecoveryErrors e = recovery_errors(s, gt);

  double b_inf = 0.0, th = 0.0;
  int tp = 0, fp = 0, fn = 0;
  for (int i = 0; i < 8; ++i) {
    double sq = 0.0;
    for (int j = 0; j < 15; ++j) {
      b_inf = std::max(b_inf, std::abs(s.b(j, i) - gt.b_star(j, i)));
      double a = s.b(j, i), c = gt.b_star(j, i);
      for (int q = 0; q < 2; ++q) {
        a += s.u(j, q) * s.w(i, q);
        c += gt.u_star(j, q) * gt.w_star(i, q);
      }
      sq += (a - c) * (a - c);
      const bool est = s.b(j, i) != 0.0, tru = gt.b_star(j, i) != 0.0;
      tp += est && tru;
      fp += est && !tru;
      fn += !est && tru;
    }
    th = std::max(th, std::sqrt(sq));
  }
  double dist = 0.0;
  const Matrix proj = Matrix::Identity(15, 15) - gt.u_star * gt.u_star.transpose();
  for (int j = 0; j < 15; ++j) {
    for (int q = 0; q < 2; ++q) {
      double v = 0.0;
      for (int p = 0; p < 15; ++p) v += proj(j, p) * s.u(p, q);
      dist += v * v;
    }
  }
  CHECK(std::abs(e.max_b_inf - b_inf) <= 1e-12);
  CHECK(std::abs(e.max_theta_l2 - th) <= 1e-12);
  CHECK(std::abs(e.subspace_dist - std::sqrt(dist)) <= 1e-12);
  CHECK(std::abs(e.support_precision - static_cast<double>(tp) / (tp + fp)) <= 1e-12);
  CHECK(std::abs(e.support_recall - static_cast<double>(tp) / (tp + fn)) <= 1e-12);
}

TEST_CASE("rmse examples and a two-pass oracle") {
  const GroundTruth gt = small_truth(3);
  const auto data = gen_samples(gt, 12, 4);
  CHECK(rmse(state_of(gt), data) <= 1e-12);
  double sq = 0.0;
  double n = 0.0;
  for (const auto& t : data) {
    sq += t.y.squaredNorm();
    n += static_cast<double>(t.y.size());
  }
  CHECK(std::abs(rmse(Matrix(Matrix::Zero(15, 8)), data) - std::sqrt(sq / n)) <= 1e-12);

  const Matrix thetas = gaussian_matrix(15, 8, 5);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& t = data[i];
    for (Eigen::Index j = 0; j < t.x.rows(); ++j) {
      double pred = 0.0;
      for (Eigen::Index a = 0; a < 15; ++a) pred += t.x(j, a) * thetas(a, static_cast<Eigen::Index>(i));
      total += (t.y(j) - pred) * (t.y(j) - pred);
    }
  }
  CHECK(std::abs(rmse(thetas, data) - std::sqrt(total / n)) <= 1e-12);
}

TEST_CASE("rmse of the planted model approaches sigma") {
  GenConfig g;
  g.d = 10;
  g.r = 1;
  g.t = 20;
  g.k = 1;
  g.zeta = 2;
  g.sigma = 0.3;
  g.seed = 6;
  const GroundTruth gt = gen_ground_truth(g);
  const auto data = gen_samples(gt, 500, 7);  // mt = 1e4
  CHECK(std::abs(rmse(state_of(gt), data) - 0.3) <= 0.05 * 0.3);
}

TEST_CASE("population gap examples and a Monte Carlo oracle") {
  const GroundTruth gt = small_truth(8, 0.5);
  const Vector th = gt.theta(0);
  CHECK(population_gap(th, th) == 0.0);
  CHECK(population_gap(Vector::Zero(15), th) == doctest::Approx(th.squaredNorm()));
  const ModelState s = state_of(gt);
  CHECK(population_gap(s, 3, gt) == 0.0);

  const Vector est = th + 0.4 * gaussian_vector(15, 9);
  GroundTruth one = gt;
  one.w_star = gt.w_star.topRows(1);
  one.b_star = gt.b_star.leftCols(1);
  const auto fresh = gen_samples(one, 100000, 10);
  const Vector resid_est = fresh[0].y - fresh[0].x * est;
  const Vector resid_true = fresh[0].y - fresh[0].x * th;
  const Vector diff = resid_est.array().square() - resid_true.array().square();
  const double mean = diff.mean();
  const double se = std::sqrt((diff.array() - mean).square().sum() / (diff.size() - 1.0) / diff.size());
  CHECK(std::abs(mean - population_gap(est, th)) <= 3.0 * se);
}

TEST_CASE("single and full fine-tune coincide for one task") {
  const auto data = random_tasks(1, 20, 6, 11);
  const Vector single = baseline_single(data);
  const Matrix ft = baseline_full_finetune(data);
  CHECK((single - ft.col(0)).norm() <= 1e-10);
}

TEST_CASE("single model recovers a homogeneous shared parameter") {
  GenConfig g;
  g.d = 10;
  g.r = 1;
  g.t = 5;
  g.k = 0;
  g.seed = 12;
  g.weights = WeightMode::ones;
  const GroundTruth gt = gen_ground_truth(g);
  const auto data = gen_samples(gt, 4, 13);  // mt = 20 >= 2d
  CHECK((baseline_single(data) - gt.theta(0)).norm() <= 1e-8);
}

TEST_CASE("default ridge only in the underdetermined regime") {
  const Matrix x = gaussian_matrix(4, 6, 14);
  const Matrix g = x.transpose() * x;
  CHECK(default_ridge(g, 4.0) == doctest::Approx(1e-6 * g.trace() / 6.0));
  CHECK(default_ridge(g, 6.0) == 0.0);
  const auto data = random_tasks(3, 4, 6, 15);
  CHECK_NOTHROW(baseline_full_finetune(data));
}

TEST_CASE("representation-only baseline has no sparse part") {
  const GroundTruth gt = small_truth(16);
  const auto data = gen_samples(gt, 30, 17);
  SolverConfig c;
  c.r = 2;
  c.k = 2;
  c.outer_iters = 3;
  const FitResult res = baseline_rep_only(data, c);
  CHECK(res.state.b.isZero(0.0));
}

TEST_CASE("thetas and replicate helpers") {
  const GroundTruth gt = small_truth(18);
  const Matrix th = thetas_of(state_of(gt));
  for (std::size_t i = 0; i < 8; ++i) CHECK((th.col(static_cast<Eigen::Index>(i)) - gt.theta(i)).norm() <= 1e-14);
  const Matrix rep = replicate(gt.theta(0), 3);
  CHECK(rep.cols() == 3);
  CHECK(rep.col(2) == gt.theta(0));
}

} // TEST_SUITE
