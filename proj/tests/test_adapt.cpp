#include "doctest.h"
#include "helpers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lrs/adapt.hpp"
#include "lrs/datagen.hpp"
#include "lrs/errors.hpp"
#include "lrs/eval.hpp"

using namespace lrs;
using namespace lrs::test;

namespace {

GroundTruth new_task_truth(int d, int r, int k, double sigma, std::uint64_t seed) {
  GenConfig g;
  g.d = d;
  g.r = r;
  g.t = 1;
  g.k = k;
  g.zeta = 1;
  g.sigma = sigma;
  g.seed = seed;
  g.support = SupportMode::exact;
  return gen_ground_truth(g);
}

double train_objective(const TaskDataset& data, const Matrix& u, const Vector& w, const Vector& b) {
  return 0.5 * (data.x * (u * w + b) - data.y).squaredNorm();
}

} // namespace

TEST_SUITE("adapt") {

TEST_CASE("moment initialization from the population moment") {
  const int d = 9;
  const Vector u = gaussian_vector(d, 1).normalized();
  const Vector w = gaussian_vector(30, 2);
  const double scale = 2.0 * w.squaredNorm() / 30.0;
  const Matrix moment = Matrix::Identity(d, d) + scale * u * u.transpose();
  const Matrix est = mom_init_from_moment(moment, 1);
  const double sign = est.col(0).dot(u) >= 0.0 ? 1.0 : -1.0;
  CHECK((sign * est.col(0) - u).norm() <= 1e-10);
}

TEST_CASE("moment initialization from samples is a useful warm start") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GenConfig g;
    g.d = 50;
    g.r = 2;
    g.t = 200;
    g.seed = 900 + seed;
    g.support = SupportMode::capped;
    const GroundTruth gt = gen_ground_truth(g);
    const auto data = gen_samples(gt, 75, 950 + seed);
    const double dist = subspace_distance(mom_init(data, 2), gt.u_star);
    CHECK(dist <= 0.3);
  }
}

TEST_CASE("all-zero responses give a degenerate moment") {
  std::vector<TaskDataset> data;
  for (int i = 0; i < 3; ++i) {
    data.emplace_back(gaussian_matrix(10, 5, static_cast<std::uint64_t>(i)), Vector::Zero(10));
  }
  CHECK_THROWS_AS(mom_init(data, 2), DegenerateMoment);
}

TEST_CASE("moment initialization ignores task and sample order") {
  GenConfig g;
  g.d = 12;
  g.r = 2;
  g.t = 20;
  g.k = 1;
  g.zeta = 2;
  g.seed = 5;
  const GroundTruth gt = gen_ground_truth(g);
  auto data = gen_samples(gt, 30, 6);
  const Matrix base = mom_init(data, 2);
  std::reverse(data.begin(), data.end());
  for (auto& t : data) {
    t.x = t.x.colwise().reverse().eval();
    t.y = t.y.reverse().eval();
  }
  const Matrix permuted = mom_init(data, 2);
  CHECK(subspace_distance(permuted, base) <= 1e-8);
}

TEST_CASE("noiseless adaptation with the true representation") {
  const int d = 40, r = 2, k = 3, m = 4 * (k + r);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GroundTruth gt = new_task_truth(d, r, k, 0.0, 500 + seed);
    const auto data = gen_samples(gt, m, 5000 + seed);
    AdaptConfig c;
    c.k = k;
    c.iters = 10;
    const AdaptResult res = adapt_new_task(data[0], gt.u_star, c, &gt);
    CHECK((gt.u_star * res.w + res.b - gt.theta(0)).norm() <= 1e-6);
  }
}

TEST_CASE("k = 0 reduces to least squares on the representation") {
  const auto data = random_tasks(1, 15, 8, 3);
  const Matrix u = random_orthonormal(8, 3, 4);
  AdaptConfig c;
  c.k = 0;
  c.iters = 3;
  const AdaptResult res = adapt_new_task(data[0], u, c);
  const Matrix xu = data[0].x * u;
  const Vector oracle = xu.completeOrthogonalDecomposition().pseudoInverse() * data[0].y;
  CHECK((res.w - oracle).norm() <= 1e-10);
  CHECK(res.b.isZero(0.0));
  CHECK(std::isnan(res.gap));
}

TEST_CASE("zero iterations return zeros and the full gap") {
  const GroundTruth gt = new_task_truth(10, 2, 2, 0.0, 7);
  const auto data = gen_samples(gt, 10, 8);
  AdaptConfig c;
  c.k = 2;
  c.iters = 0;
  const AdaptResult res = adapt_new_task(data[0], gt.u_star, c, &gt);
  CHECK(res.w.isZero(0.0));
  CHECK(res.b.isZero(0.0));
  CHECK(res.gap == doctest::Approx(gt.theta(0).squaredNorm()).epsilon(1e-14));
}

TEST_CASE("too few samples for the representation is singular") {
  const auto data = random_tasks(1, 1, 6, 9);
  AdaptConfig c;
  c.k = 1;
  c.iters = 2;
  CHECK_THROWS_AS(adapt_new_task(data[0], random_orthonormal(6, 2, 1), c), SingularSystem);
}

TEST_CASE("the w step never increases the training objective") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GroundTruth gt = new_task_truth(30, 2, 3, 0.1, 40 + seed);
    const auto data = gen_samples(gt, 25, 60 + seed);
    AdaptConfig c;
    c.k = 3;
    c.iters = 8;
    double before = train_objective(data[0], gt.u_star, Vector::Zero(2), Vector::Zero(30));
    int w_steps = 0;
    const AdaptObserver obs = [&](const char* stage, const Vector& w, const Vector& b) {
      const double now = train_objective(data[0], gt.u_star, w, b);
      if (std::string(stage) == "w") {
        ++w_steps;
        CHECK(now <= before + 1e-9 * std::max(1.0, before));
      }
      before = now;
    };
    adapt_new_task(data[0], gt.u_star, c, &gt, obs);
    CHECK(w_steps == 8);
  }
}

TEST_CASE("adaptation beats full fine-tuning on few noisy samples") {
  const int d = 40, r = 2, k = 3, m = 8 * (k + r);
  double adapt_gap = 0.0, ridge_gap = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GroundTruth gt = new_task_truth(d, r, k, 0.1, 500 + seed);
    const auto data = gen_samples(gt, m, 5000 + seed);
    AdaptConfig c;
    c.k = k;
    adapt_gap += adapt_new_task(data[0], gt.u_star, c, &gt).gap;
    ridge_gap += population_gap(baseline_full_finetune(data).col(0), gt.theta(0));
  }
  CHECK(adapt_gap < ridge_gap);
}

} // TEST_SUITE
