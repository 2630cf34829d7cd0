#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cshape/error.hpp"
#include "cshape/metrics.hpp"
#include "cshape/quadrature.hpp"
#include "oracles.hpp"

using namespace cshape;

namespace {

QuadratureConfig gh(int order) {
  QuadratureConfig c;
  c.order = order;
  return c;
}

}  // namespace

TEST_CASE("gauss-hermite low orders") {
  const auto r1 = gauss_hermite_nodes(1);
  REQUIRE(r1.nodes.size() == 1);
  CHECK(r1.nodes[0] == doctest::Approx(0.0));
  CHECK(r1.weights[0] == doctest::Approx(std::sqrt(std::numbers::pi)));
  const auto r2 = gauss_hermite_nodes(2);
  CHECK(r2.nodes[0] == doctest::Approx(-1.0 / std::sqrt(2.0)));
  CHECK(r2.nodes[1] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(r2.weights[0] == doctest::Approx(std::sqrt(std::numbers::pi) / 2.0));
  // x^2 against exp(-x^2) integrates to sqrt(pi)/2
  double m2 = 0.0;
  for (int i = 0; i < 2; ++i) m2 += r2.weights[i] * r2.nodes[i] * r2.nodes[i];
  CHECK(m2 == doctest::Approx(std::sqrt(std::numbers::pi) / 2.0));
}

TEST_CASE("gauss-hermite weights sum to sqrt(pi)") {
  for (int n : {5, 20, 40, 64}) {
    double s = 0.0;
    for (double w : gauss_hermite_nodes(n).weights) s += w;
    CHECK(std::abs(s - std::sqrt(std::numbers::pi)) < 1e-12);
  }
  CHECK_THROWS_AS(gauss_hermite_nodes(0), Error);
  CHECK_THROWS_AS(gauss_hermite_nodes(65), Error);
}

TEST_CASE("gauss-hermite is exact for polynomials below degree 2n") {
  // E[x^(2m)] for x ~ N(0, 1/2) is (2m-1)!! / 2^m
  const int n = 6;
  const auto r = gauss_hermite_nodes(n);
  double dfact = 1.0;
  for (int m = 0; m < n; ++m) {
    if (m > 0) dfact *= (2 * m - 1);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += r.weights[i] * std::pow(r.nodes[i], 2 * m);
    CHECK(s / std::sqrt(std::numbers::pi) == doctest::Approx(dfact / std::pow(2.0, m)).epsilon(1e-12));
  }
}

TEST_CASE("expectation of simple integrands") {
  for (QuadratureScheme sch : {QuadratureScheme::gauss_hermite, QuadratureScheme::truncated_box}) {
    QuadratureConfig c;
    c.scheme = sch;
    c.order = sch == QuadratureScheme::truncated_box ? 400 : 24;
    CHECK(complex_gaussian_expectation([](std::complex<double>) { return 1.0; }, 3.0, c) ==
          doctest::Approx(1.0).epsilon(1e-6));
    CHECK(complex_gaussian_expectation([](std::complex<double> z) { return std::norm(z); }, 2.0, c) ==
          doctest::Approx(2.0).epsilon(1e-6));
    for (double s2 : {0.3, 1.0, 7.0})
      CHECK(complex_gaussian_expectation([s2](std::complex<double> z) { return std::exp(-std::norm(z) / s2); }, s2, c) ==
            doctest::Approx(0.5).epsilon(1e-6));
  }
}

TEST_CASE("monte carlo expectation is seeded") {
  QuadratureConfig c;
  c.scheme = QuadratureScheme::monte_carlo;
  c.order = 200000;
  c.seed = 3;
  auto f = [](std::complex<double> z) { return std::norm(z); };
  const double a = complex_gaussian_expectation(f, 2.0, c);
  CHECK(a == complex_gaussian_expectation(f, 2.0, c));
  CHECK(a == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("non-finite integrand names the node") {
  try {
    complex_gaussian_expectation([](std::complex<double>) { return std::nan(""); }, 1.0, gh(4));
    FAIL("expected a throw");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("node") != std::string::npos);
  }
}

TEST_CASE("bad quadrature configs are rejected") {
  QuadratureConfig c;
  c.order = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.tau1 = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_THROWS_AS(parse_quadrature_scheme("simpson"), Error);
  CHECK(parse_quadrature_scheme("truncated_box") == QuadratureScheme::truncated_box);
}

TEST_CASE("gauss-hermite and monte carlo agree on log-mixture expectations") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 5; ++trial) {
    const int K = 2 + trial;
    std::vector<std::complex<double>> d;
    for (int k = 0; k < K; ++k) d.emplace_back(u(rng), u(rng));
    const Eigen::VectorXd p = oracle::random_simplex(K, rng);
    const double s2 = 0.5 + trial * 0.4;
    auto f = [&](std::complex<double> z) {
      double m = 0.0;
      for (int j = 0; j < K; ++j) m += p[j] * std::exp(-std::norm(d[static_cast<std::size_t>(j)] + z) / s2);
      return std::log2(m);
    };
    QuadratureConfig mc;
    mc.scheme = QuadratureScheme::monte_carlo;
    mc.order = 1000000;
    mc.seed = 100 + static_cast<std::uint64_t>(trial);
    const double exact = complex_gaussian_expectation(f, s2, gh(24));
    // standard error from the same draws
    const auto nodes = gaussian_nodes(s2, mc);
    double s = 0.0, sq = 0.0;
    for (const auto& nd : nodes) {
      const double v = f(nd.z);
      s += v;
      sq += v * v;
    }
    const double n = static_cast<double>(nodes.size());
    const double se = std::sqrt((sq / n - (s / n) * (s / n)) / n);
    CHECK(std::abs(complex_gaussian_expectation(f, s2, mc) - exact) <= 3.0 * se);
  }
}

TEST_CASE("truncated box approaches gauss-hermite") {
  const auto set = make_qam(4);
  const ChannelRealization ch{{0.8, 0.3}, {0.5, 0.0}};
  QuadratureConfig box;
  box.scheme = QuadratureScheme::truncated_box;
  box.order = 400;
  box.tau1 = box.tau2 = 6.0;
  const MetricContext a(set, 10.0, ch, NoiseModel(1.0, 1.0), gh(24));
  const MetricContext b(set, 10.0, ch, NoiseModel(1.0, 1.0), box);
  const Eigen::VectorXd p = (Eigen::VectorXd(4) << 0.1, 0.2, 0.3, 0.4).finished();
  CHECK(std::abs(rate_exact(a, p) - rate_exact(b, p)) < 1e-4);
  CHECK(std::abs(kl_h0_h1_exact(a, p) - kl_h0_h1_exact(b, p)) < 1e-4);
}

TEST_CASE("rate is settled at order 16") {
  for (double snr : {0.0, 6.0, 14.0}) {
    for (int K : {4, 16}) {
      const auto set = make_qam(K);
      const ChannelRealization ch = sample_rayleigh({}, 4);
      const NoiseModel nm(sigma_b_from_snr(10.0, snr), 1.0);
      const MetricContext lo(set, 10.0, ch, nm, gh(16)), hi(set, 10.0, ch, nm, gh(32));
      const Eigen::VectorXd p = equiprobable(static_cast<std::size_t>(K)).vector();
      CHECK(std::abs(rate_exact(lo, p) - rate_exact(hi, p)) < 1e-6);
    }
  }
}
