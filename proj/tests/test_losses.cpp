#include "arl/losses.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using arl::HyperParams;
using arl::LossVariant;
using arl::VectorXd;
using doctest::Approx;

namespace {

VectorXd probs(std::initializer_list<double> v) {
  VectorXd p(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) p[i++] = x;
  return p;
}

}  // namespace

TEST_CASE("cross entropy reference values") {
  CHECK(arl::ce<double>(VectorXd::Constant(10, 0.1), 3).value == Approx(2.302585).epsilon(1e-6));
  CHECK(arl::ce<double>(probs({0.5, 0.5}), 0).value == Approx(0.693147).epsilon(1e-6));
  CHECK(arl::ce<double>(probs({1.0, 0.0, 0.0}), 0).value == Approx(0.0).epsilon(1e-11));
  // A zero probability is floored instead of producing infinity.
  CHECK(std::isfinite(arl::ce<double>(probs({1.0, 0.0}), 1).value));
}

TEST_CASE("probability checks") {
  CHECK_THROWS_AS(arl::ce<double>(probs({0.6, 0.6}), 0), arl::DomainError);
  CHECK_THROWS_AS(arl::ce<double>(probs({0.5, 0.5}), 2), arl::DomainError);
  CHECK_THROWS_AS(arl::ce<double>(probs({std::nan(""), 0.5}), 0), arl::DomainError);
}

TEST_CASE("generalized cross entropy reference values") {
  CHECK(arl::gce<double>(probs({0.5, 0.5}), 0, 1.0).value == Approx(0.5));
  CHECK(arl::gce<double>(probs({0.25, 0.75}), 0, 0.5).value == Approx(1.0));
  CHECK(arl::gce<double>(probs({0.5, 0.5}), 0, 1e-4).value == Approx(0.693147).epsilon(1e-4));
  CHECK_THROWS_AS(arl::gce<double>(probs({0.5, 0.5}), 0, 0.0), arl::DomainError);
  CHECK_THROWS_AS(arl::gce<double>(probs({0.5, 0.5}), 0, 1.5), arl::DomainError);
}

TEST_CASE("generalized cross entropy tends to cross entropy as q goes to zero") {
  // ce - gce = q ln^2(p) / 2 + O(q^2), so the gap at q = 1e-4 first exceeds
  // 1e-3 just below p = 0.0114.
  const double q = 1e-4;
  for (int i = 1; i <= 100; ++i) {
    const double p = 0.01 * i;
    const VectorXd u = probs({p, 1.0 - p});
    const double gap = arl::ce<double>(u, 0).value - arl::gce<double>(u, 0, q).value;
    const double lead = q * std::log(p) * std::log(p) / 2;
    CHECK(gap >= -1e-12);
    CHECK(gap == Approx(lead).epsilon(1e-3));
    if (p >= 0.0115) CHECK(gap <= 1e-3);
  }
}

TEST_CASE("reverse cross entropy reference values") {
  CHECK(arl::rce<double>(probs({0.6, 0.3, 0.1}), 0, -4.0).value == Approx(1.6));
  CHECK(arl::rce<double>(probs({0.0, 1.0, 0.0}), 1, -4.0).value == Approx(0.0));
  CHECK(arl::rce<double>(VectorXd::Constant(10, 0.1), 4, -4.0).value == Approx(3.6));
  CHECK_THROWS_AS(arl::rce<double>(probs({0.5, 0.5}), 0, 0.0), arl::DomainError);
}

TEST_CASE("symmetric loss reduces to its parts") {
  const VectorXd p = probs({0.6, 0.3, 0.1});
  const double c = arl::ce<double>(p, 0).value;
  const double r = arl::rce<double>(p, 0, -4.0).value;
  CHECK(arl::sl<double>(p, 0, 1.0, 0.0).value == Approx(c));
  CHECK(arl::sl<double>(p, 0, 0.0, 1.0).value == Approx(r));
  const double q = std::exp(-0.5);
  const VectorXd p2 = probs({q, (1 - q) * 0.6, (1 - q) * 0.4});
  CHECK(arl::sl<double>(p2, 0, 2.0, 3.0).value == Approx(2 * 0.5 + 3 * 4 * (1 - q)));
  CHECK_THROWS_AS(arl::sl<double>(p, 0, -1.0, 1.0), arl::DomainError);
}

TEST_CASE("bi-tempered reference cases") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.5);
  SUBCASE("near-unit temperatures give cross entropy") {
    for (int i = 0; i < 50; ++i) {
      VectorXd z(4);
      for (auto& v : z) v = n(rng);
      const double bt = arl::bi_tempered<double>(z, i % 4, 1.0 - 1e-6, 1.0 + 1e-6).value;
      CHECK(bt == Approx(arl::ce<double>(arl::softmax<double>(z), i % 4).value).epsilon(1e-4));
    }
  }
  SUBCASE("confident correct prediction") {
    // With t2 = 2 the tails are polynomial: a margin of m leaves roughly 1/m
    // of the mass on each other class, so the loss decays like 1/m.
    double prev = INFINITY;
    for (double margin : {20.0, 200.0, 2000.0, 20000.0}) {
      VectorXd z = VectorXd::Zero(5);
      z[2] = margin;
      const double v = arl::bi_tempered<double>(z, 2, 0.5, 2.0).value;
      CHECK(v == Approx(static_cast<double>(oracle::bi_tempered(oracle::to_real(z), 2, 0.5L, 2.0L))).epsilon(1e-8));
      CHECK(v < prev);
      prev = v;
    }
    CHECK(prev <= 1e-3);
  }
  SUBCASE("bounded over random inputs") {
    const double bound = 2.0 + (1.0 - std::pow(10.0, -0.5)) / 1.5;
    CHECK(arl::bi_tempered_upper_bound<double>(10, 0.5) == Approx(bound));
    for (int i = 0; i < 1000; ++i) {
      VectorXd z(10);
      for (auto& v : z) v = 4.0 * n(rng);
      const double v = arl::bi_tempered<double>(z, i % 10, 0.5, 2.0).value;
      CHECK(v >= -1e-12);
      CHECK(v <= bound + 1e-12);
    }
  }
  SUBCASE("matches the oracle") {
    for (int i = 0; i < 100; ++i) {
      VectorXd z(6);
      for (auto& v : z) v = n(rng);
      const double ref = static_cast<double>(oracle::bi_tempered(oracle::to_real(z), i % 6, 0.3, 1.7));
      CHECK(arl::bi_tempered<double>(z, i % 6, 0.3, 1.7).value == Approx(ref).epsilon(1e-10));
    }
  }
  CHECK_THROWS_AS(arl::bi_tempered<double>(VectorXd::Zero(3), 0, 1.0, 2.0), arl::DomainError);
  CHECK_THROWS_AS(arl::bi_tempered<double>(VectorXd::Zero(3), 0, 0.5, 1.0), arl::DomainError);
}

TEST_CASE("polysoft reference values") {
  CHECK(arl::polysoft<double>(2.0, 1.0, 2.0).value == Approx(0.5));
  CHECK(arl::polysoft<double>(0.0, 1.0, 2.0).value == Approx(0.0));
  CHECK(arl::polysoft<double>(0.75, 1.0, 2.0).value == Approx(0.46875));
  CHECK(arl::polysoft_weight<double>(0.75, 1.0, 2.0) == Approx(0.25));
  CHECK(arl::polysoft_weight<double>(1.0, 1.0, 2.0) == 0.0);
  CHECK(arl::polysoft_weight<double>(3.0, 1.0, 2.0) == 0.0);
  CHECK(arl::polysoft_weight<double>(0.0, 1.3, 3.0) == Approx(1.0));
  CHECK_THROWS_AS(arl::polysoft<double>(0.5, 0.0, 2.0), arl::DomainError);
  CHECK_THROWS_AS(arl::polysoft<double>(0.5, 1.0, 1.0), arl::DomainError);
  CHECK_THROWS_AS(arl::polysoft_weight<double>(-0.1, 1.0, 2.0), arl::DomainError);
}

TEST_CASE("polysoft weight is the derivative of the latent loss") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double lambda = 0.2 + 4.0 * u(rng), d = 1.2 + 4.0 * u(rng);
    const double c = 3.0 * lambda * u(rng);
    if (std::abs(c - lambda) < 1e-3) continue;
    const auto f = [&](const oracle::VecR& x) { return oracle::polysoft_of_ce(x[0], lambda, d); };
    const double fd = static_cast<double>(oracle::central_gradient(f, oracle::VecR::Constant(1, c), 1e-6L)[0]);
    CHECK(arl::polysoft_weight<double>(c, lambda, d) == Approx(fd).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("polysoft is monotone with a plateau") {
  double prev = -1.0, prev_w = 2.0;
  for (double c = 0.0; c < 4.0; c += 0.01) {
    const double v = arl::polysoft<double>(c, 1.5, 3.0).value;
    const double w = arl::polysoft_weight<double>(c, 1.5, 3.0);
    CHECK(v >= prev);
    CHECK(w <= prev_w);
    prev = v;
    prev_w = w;
    if (c >= 1.5) CHECK(v == Approx(1.0));
  }
}

TEST_CASE("evaluate_loss dispatches to every variant") {
  VectorXd z(3);
  z << 0.3, -1.2, 0.8;
  const VectorXd p = arl::softmax<double>(z);
  HyperParams h;
  h.variant = LossVariant::kCe;
  CHECK(arl::evaluate_loss<double>(h, z, 1).value == Approx(arl::ce<double>(p, 1).value));
  h.variant = LossVariant::kGce;
  CHECK(arl::evaluate_loss<double>(h, z, 1).value == Approx(arl::gce<double>(p, 1, h.q).value));
  h.variant = LossVariant::kSl;
  CHECK(arl::evaluate_loss<double>(h, z, 1).value ==
        Approx(arl::sl<double>(p, 1, h.gamma1, h.gamma2).value));
  h.variant = LossVariant::kPolySoft;
  CHECK(arl::evaluate_loss<double>(h, z, 1).value ==
        Approx(arl::polysoft<double>(arl::ce<double>(p, 1).value, h.lambda, h.d).value));
  h.variant = LossVariant::kBiTempered;
  CHECK(arl::evaluate_loss<double>(h, z, 1).value ==
        Approx(arl::bi_tempered<double>(z, 1, h.t1, h.t2).value));
  CHECK_THROWS_AS(arl::evaluate_loss<double>(h, z, 3), arl::DomainError);
}

TEST_CASE("analytic gradients match finite differences of the oracles") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 40; ++i) {
    const int c = 2 + i % 6;
    VectorXd z(c);
    for (auto& v : z) v = n(rng);
    const int y = static_cast<int>(rng() % static_cast<std::uint64_t>(c));
    const oracle::VecR zr = oracle::to_real(z);
    const double q = 0.05 + 0.95 * u(rng);
    const double g1 = 5 * u(rng), g2 = 5 * u(rng);
    const double t1 = 0.9 * u(rng), t2 = 1.05 + 2 * u(rng);
    const double lambda = 0.2 + 4 * u(rng), d = 1.2 + 4 * u(rng);
    if (std::abs(static_cast<double>(oracle::ce(zr, y)) - lambda) < 1e-3) continue;

    auto fd = [&](auto f) { return oracle::central_gradient(f, zr, 1e-6L).template cast<double>().eval(); };
    CHECK(oracle::rel_err(arl::gce<double>(arl::softmax<double>(z), y, q).grad_logits,
                          fd([&](const oracle::VecR& x) { return oracle::gce(x, y, q); })) <= 1e-7);
    CHECK(oracle::rel_err(arl::sl<double>(arl::softmax<double>(z), y, g1, g2).grad_logits,
                          fd([&](const oracle::VecR& x) { return oracle::sl(x, y, g1, g2); })) <= 1e-7);
    CHECK(oracle::rel_err(arl::bi_tempered<double>(z, y, t1, t2).grad_logits,
                          fd([&](const oracle::VecR& x) { return oracle::bi_tempered(x, y, t1, t2); })) <= 1e-6);
    HyperParams h = HyperParams::defaults(LossVariant::kPolySoft, c);
    h.lambda = lambda;
    h.d = d;
    CHECK(oracle::rel_err(arl::evaluate_loss<double>(h, z, y).grad_logits,
                          fd([&](const oracle::VecR& x) { return oracle::polysoft(x, y, lambda, d); })) <= 1e-5);
  }
}
