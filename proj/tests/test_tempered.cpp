#include "arl/tempered.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using arl::VectorXd;

TEST_CASE("log_t reference values") {
  for (double t : {0.0, 0.3, 0.5, 1.0, 1.5, 2.0}) CHECK(arl::log_t(1.0, t) == doctest::Approx(0.0));
  CHECK(arl::log_t(4.0, 0.5) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(arl::log_t(std::exp(1.0), 1.0 - 1e-9) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(arl::log_t(std::exp(1.0), 1.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("log_t rejects nonpositive input") {
  CHECK_THROWS_AS(arl::log_t(0.0, 0.5), arl::DomainError);
  CHECK_THROWS_AS(arl::log_t(-1.0, 1.5), arl::DomainError);
}

TEST_CASE("exp_t reference values") {
  for (double t : {0.0, 0.5, 1.0, 1.5, 2.0}) CHECK(arl::exp_t(0.0, t) == doctest::Approx(1.0));
  CHECK(arl::exp_t(-1.0, 2.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(arl::exp_t(arl::log_t(0.3, 1.5), 1.5) == doctest::Approx(0.3).epsilon(1e-14));
  // Outside the support the base is clipped.
  CHECK(arl::exp_t(-3.0, 0.5) == 0.0);
  CHECK(std::isinf(arl::exp_t(2.0, 2.0)));
}

TEST_CASE("log_t and exp_t agree with the extended precision oracle") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> xs(0.01, 10.0), ts(0.0, 3.0);
  for (int i = 0; i < 2000; ++i) {
    const double x = xs(rng), t = ts(rng);
    const double lt = arl::log_t(x, t);
    CHECK(lt == doctest::Approx(static_cast<double>(oracle::log_t(x, t))).epsilon(1e-12));
    CHECK(arl::exp_t(lt, t) == doctest::Approx(x).epsilon(1e-10));
  }
}

TEST_CASE("tempered softmax of equal logits is uniform") {
  for (double t : {1.1, 1.5, 2.0, 4.0}) {
    const auto r = arl::tempered_softmax<double>(VectorXd::Constant(4, 0.7), t);
    for (int j = 0; j < 4; ++j) CHECK(r.probs[j] == doctest::Approx(0.25).epsilon(1e-10));
  }
}

TEST_CASE("tempered softmax matches the oracle solver and sums to one") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 3.0);
  std::uniform_real_distribution<double> ts(1.01, 3.0);
  for (int i = 0; i < 500; ++i) {
    VectorXd z(2 + i % 9);
    for (auto& v : z) v = n(rng);
    const double t = ts(rng);
    const auto r = arl::tempered_softmax<double>(z, t);
    CHECK(std::abs(r.probs.sum() - 1.0) <= 1e-10);
    const VectorXd ref = oracle::tempered_softmax(oracle::to_real(z), t).cast<double>();
    CHECK((r.probs - ref).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("tempered softmax approaches softmax as t goes to one") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    VectorXd z(5);
    for (auto& v : z) v = n(rng);
    const auto r = arl::tempered_softmax<double>(z, 1.0 + 1e-8);
    CHECK((r.probs - arl::softmax<double>(z)).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("tempered softmax argument checks") {
  CHECK_THROWS_AS(arl::tempered_softmax<double>(VectorXd::Zero(3), 1.0), arl::DomainError);
  CHECK_THROWS_AS(arl::tempered_softmax<double>(VectorXd(0), 1.5), arl::ShapeError);
  VectorXd bad = VectorXd::Zero(3);
  bad[1] = std::nan("");
  CHECK_THROWS_AS(arl::tempered_softmax<double>(bad, 1.5), arl::DomainError);
}

TEST_CASE("tempered softmax reports non-convergence") {
  arl::TemperedSolverOptions opts;
  opts.max_iterations = 3;
  VectorXd z(3);
  z << 0.1, -2.0, 1.3;
  CHECK_THROWS_AS(arl::tempered_softmax<double>(z, 1.5, opts), arl::NumericError);
}

TEST_CASE("tempered softmax handles large logit gaps") {
  VectorXd z(3);
  z << 500.0, -500.0, 0.0;
  const auto r = arl::tempered_softmax<double>(z, 2.0);
  CHECK(std::abs(r.probs.sum() - 1.0) <= 1e-10);
  CHECK(r.probs[0] > 0.99);
}
