#include "doctest.h"
#include "helpers.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include "lrs/datagen.hpp"
#include "lrs/errors.hpp"
#include "lrs/numerics.hpp"

using namespace lrs;
using namespace lrs::test;

namespace {

void check_budgets(const GroundTruth& gt, int k, int zeta) {
  for (Eigen::Index i = 0; i < gt.b_star.cols(); ++i) {
    CHECK((gt.b_star.col(i).array() != 0.0).count() <= k);
  }
  for (Eigen::Index j = 0; j < gt.b_star.rows(); ++j) {
    CHECK((gt.b_star.row(j).array() != 0.0).count() <= zeta);
  }
}

// Runs body with LRS_THREADS set to value, restoring the previous setting.
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

TEST_SUITE("datagen") {

TEST_CASE("k = 0 gives a zero sparse part") {
  GenConfig g;
  g.d = 8;
  g.r = 2;
  g.t = 5;
  g.k = 0;
  g.zeta = 0;
  const GroundTruth gt = gen_ground_truth(g);
  CHECK(gt.b_star.isZero(0.0));
}

TEST_CASE("orthonormality and budgets over random feasible configs") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    KeyedStream s(seed, kTestStream);
    GenConfig g;
    g.d = 5 + static_cast<int>(s.below(30));
    g.r = 1 + static_cast<int>(s.below(3));
    g.t = 1 + static_cast<int>(s.below(40));
    g.k = static_cast<int>(s.below(static_cast<std::uint64_t>(g.d) + 1));
    g.zeta = static_cast<int>(s.below(static_cast<std::uint64_t>(g.t) + 1));
    g.seed = seed;
    g.support = SupportMode::capped;
    if (g.t * g.k <= g.d * g.zeta && s.below(2) == 0) g.support = SupportMode::exact;
    const GroundTruth gt = gen_ground_truth(g);
    CHECK(frobenius_orthonormality_defect(gt.u_star) <= 1e-10);
    check_budgets(gt, g.k, g.zeta);
    CHECK_NOTHROW(gt.validate());
    if (g.support == SupportMode::exact) {
      for (Eigen::Index i = 0; i < gt.b_star.cols(); ++i) {
        CHECK((gt.b_star.col(i).array() != 0.0).count() == g.k);
      }
    }
  }
}

TEST_CASE("capped supports fill the available slots evenly") {
  GenConfig g;
  g.d = 50;
  g.r = 2;
  g.t = 200;
  g.k = 5;
  g.zeta = 10;
  g.support = SupportMode::capped;
  const GroundTruth gt = gen_ground_truth(g);
  check_budgets(gt, 5, 10);
  const auto total = (gt.b_star.array() != 0.0).count();
  CHECK(total == 500);
  for (Eigen::Index i = 0; i < gt.b_star.cols(); ++i) {
    const auto c = (gt.b_star.col(i).array() != 0.0).count();
    CHECK(c >= 2);
    CHECK(c <= 3);
  }
}

TEST_CASE("infeasible exact supports are rejected") {
  GenConfig g;
  g.d = 10;
  g.t = 30;
  g.k = 4;
  g.zeta = 2;
  g.support = SupportMode::exact;
  CHECK_THROWS_AS(gen_ground_truth(g), InfeasibleSparsity);
}

TEST_CASE("config invariants") {
  GenConfig g;
  g.d = 4;
  g.k = 5;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = {};
  g.t = 3;
  g.zeta = 4;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = {};
  g.d = 2;
  g.r = 3;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("noiseless samples are exactly realizable") {
  GenConfig g;
  g.d = 12;
  g.r = 2;
  g.t = 6;
  g.k = 2;
  g.zeta = 2;
  g.seed = 9;
  const GroundTruth gt = gen_ground_truth(g);
  const auto data = gen_samples(gt, 20, 4);
  REQUIRE(data.size() == 6);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK((data[i].y - data[i].x * gt.theta(i)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("least squares per task recovers theta when m >= d and sigma = 0") {
  GenConfig g;
  g.d = 10;
  g.r = 2;
  g.t = 4;
  g.k = 3;
  g.zeta = 2;
  g.seed = 2;
  const GroundTruth gt = gen_ground_truth(g);
  const auto data = gen_samples(gt, 15, 5);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK((least_squares(data[i].x, data[i].y, 0.0) - gt.theta(i)).norm() <= 1e-8);
  }
}

TEST_CASE("generation is deterministic and independent of the thread count") {
  GenConfig g;
  g.d = 20;
  g.r = 3;
  g.t = 17;
  g.k = 3;
  g.zeta = 5;
  g.sigma = 0.3;
  g.seed = 77;
  const GroundTruth a = gen_ground_truth(g);
  const GroundTruth b = gen_ground_truth(g);
  CHECK(a.u_star == b.u_star);
  CHECK(a.w_star == b.w_star);
  CHECK(a.b_star == b.b_star);
  std::vector<TaskDataset> one, many;
  with_threads("1", [&] { one = gen_samples(a, 11, 3); });
  with_threads("4", [&] { many = gen_samples(a, 11, 3); });
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].x == many[i].x);
    CHECK(one[i].y == many[i].y);
  }
  const auto other = gen_samples(a, 11, 4);
  CHECK(other[0].x != one[0].x);
}

TEST_CASE("covariates are approximately isotropic") {
  GenConfig g;
  g.d = 10;
  g.t = 1;
  g.seed = 5;
  const GroundTruth gt = gen_ground_truth(g);
  const auto data = gen_samples(gt, 5000, 6);
  const Matrix cov = data[0].x.transpose() * data[0].x / 5000.0;
  const Eigen::SelfAdjointEigenSolver<Matrix> es(cov - Matrix::Identity(10, 10));
  CHECK(es.eigenvalues().cwiseAbs().maxCoeff() <= 0.2);
}

TEST_CASE("incoherence of all-ones weights") {
  GroundTruth gt;
  gt.u_star = Matrix::Zero(4, 1);
  gt.u_star(0, 0) = 1.0;
  gt.w_star = Matrix::Ones(6, 1);
  gt.b_star = Matrix::Zero(4, 6);
  const IncoherenceReport rep = measure_incoherence(gt);
  CHECK(std::abs(rep.lambda_1 - 1.0) <= 1e-12);
  CHECK(std::abs(rep.lambda_r - 1.0) <= 1e-12);
  CHECK(std::abs(rep.u_two_inf - 1.0) <= 1e-12);
  CHECK(std::abs(rep.mu_star - 4.0) <= 1e-12);  // max(1, 1 * d / r)
}

TEST_CASE("incoherence matches a brute-force eigensolver") {
  GenConfig g;
  g.d = 10;
  g.r = 2;
  g.t = 20;
  g.k = 2;
  g.zeta = 5;
  g.seed = 31;
  const GroundTruth gt = gen_ground_truth(g);
  const IncoherenceReport rep = measure_incoherence(gt);
  const Matrix gram = (2.0 / 20.0) * gt.w_star.transpose() * gt.w_star;
  const Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  const double lr = es.eigenvalues()(0), l1 = es.eigenvalues()(1);
  CHECK(std::abs(rep.lambda_r - lr) <= 1e-10);
  CHECK(std::abs(rep.lambda_1 - l1) <= 1e-10);
  const double w_row = gt.w_star.rowwise().norm().maxCoeff();
  const double u_row = gt.u_star.rowwise().norm().maxCoeff();
  const double mu = std::max(w_row * w_row / lr, u_row * u_row * 10.0 / 2.0);
  CHECK(std::abs(rep.mu_star - mu) <= 1e-10 * mu);
  CHECK(std::isfinite(rep.w_incoherence));
  CHECK(std::isfinite(rep.u_incoherence));
  CHECK(rep.w_incoherence <= 1.0 + 1e-12);
  CHECK(rep.u_incoherence <= 1.0 + 1e-12);
  CHECK(rep.max_col_nonzeros <= 2);
  CHECK(rep.max_row_nonzeros <= 5);
  MESSAGE("mu* = " << rep.mu_star << ", lambda_1 = " << rep.lambda_1
                   << ", lambda_r = " << rep.lambda_r);
}

} // TEST_SUITE
