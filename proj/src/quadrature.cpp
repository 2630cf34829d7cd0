#include "cshape/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cshape/error.hpp"
#include "cshape/rng.hpp"

namespace cshape {

std::string to_string(QuadratureScheme s) {
  switch (s) {
    case QuadratureScheme::gauss_hermite: return "gauss_hermite";
    case QuadratureScheme::truncated_box: return "truncated_box";
    case QuadratureScheme::monte_carlo: return "monte_carlo";
  }
  return "?";
}

QuadratureScheme parse_quadrature_scheme(const std::string& s) {
  if (s == "gauss_hermite") return QuadratureScheme::gauss_hermite;
  if (s == "truncated_box") return QuadratureScheme::truncated_box;
  if (s == "monte_carlo") return QuadratureScheme::monte_carlo;
  throw Error("unknown quadrature scheme '" + s + "' (gauss_hermite, truncated_box, monte_carlo)");
}

void QuadratureConfig::validate() const {
  if (order < 1) throw Error("quadrature order must be >= 1");
  if (scheme == QuadratureScheme::gauss_hermite && order > 64)
    throw Error("Gauss-Hermite order must be <= 64");
  if (!(tau1 > 0.0) || !(tau2 > 0.0)) throw Error("quadrature tau1/tau2 must be positive");
}

GaussHermiteRule gauss_hermite_nodes(int order) {
  if (order < 1 || order > 64) throw Error("Gauss-Hermite order must be in [1, 64]");
  // Newton iteration on the orthonormal Hermite recurrence, with the
  // asymptotic initial guesses of Numerical Recipes' gauher.
  const int n = order;
  const double pim4 = std::pow(std::numbers::pi, -0.25);
  std::vector<double> x(n), w(n);
  const int half = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < half; ++i) {
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    else if (i == 1)
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * x[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * x[1];
    else
      z = 2.0 * z - x[i - 2];
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = pim4, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = w[n - 1 - i] = 2.0 / (pp * pp);
  }
  if (n % 2 == 1) x[n / 2] = 0.0;
  std::reverse(x.begin(), x.end());
  std::reverse(w.begin(), w.end());
  return {std::move(x), std::move(w)};
}

std::vector<GaussianNode> gaussian_nodes(double sigma_sq, const QuadratureConfig& cfg, IntegralRole role) {
  cfg.validate();
  if (!(sigma_sq > 0.0)) throw Error("noise variance must be positive");
  const double sigma = std::sqrt(sigma_sq);
  std::vector<GaussianNode> nodes;
  switch (cfg.scheme) {
    case QuadratureScheme::gauss_hermite: {
      // Re z, Im z ~ N(0, sigma^2 / 2): substitute r = sigma * x.
      const auto rule = gauss_hermite_nodes(cfg.order);
      const double norm = 1.0 / std::numbers::pi;
      nodes.reserve(rule.nodes.size() * rule.nodes.size());
      for (std::size_t a = 0; a < rule.nodes.size(); ++a)
        for (std::size_t b = 0; b < rule.nodes.size(); ++b)
          nodes.push_back({{sigma * rule.nodes[a], sigma * rule.nodes[b]},
                           norm * rule.weights[a] * rule.weights[b]});
      break;
    }
    case QuadratureScheme::truncated_box: {
      const double tau = (role == IntegralRole::objective ? cfg.tau1 : cfg.tau2) * sigma;
      const double h = 2.0 * tau / cfg.order;
      const double density = 1.0 / (std::numbers::pi * sigma_sq);
      nodes.reserve(static_cast<std::size_t>(cfg.order) * static_cast<std::size_t>(cfg.order));
      for (int a = 0; a < cfg.order; ++a) {
        for (int b = 0; b < cfg.order; ++b) {
          const std::complex<double> z(-tau + (a + 0.5) * h, -tau + (b + 0.5) * h);
          nodes.push_back({z, h * h * density * std::exp(-std::norm(z) / sigma_sq)});
        }
      }
      break;
    }
    case QuadratureScheme::monte_carlo: {
      SplitMix64 rng(cfg.seed);
      const double s = sigma * std::sqrt(0.5);
      const double w = 1.0 / cfg.order;
      nodes.reserve(static_cast<std::size_t>(cfg.order));
      for (int i = 0; i < cfg.order; ++i) {
        const double re = rng.normal();
        const double im = rng.normal();
        nodes.push_back({{s * re, s * im}, w});
      }
      break;
    }
  }
  return nodes;
}

double complex_gaussian_expectation(const std::function<double(std::complex<double>)>& f, double sigma_sq,
                                    const QuadratureConfig& cfg) {
  double acc = 0.0;
  for (const auto& node : gaussian_nodes(sigma_sq, cfg)) {
    const double v = f(node.z);
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "integrand is not finite at node z = (" << node.z.real() << ", " << node.z.imag() << ")";
      throw NumericalError(os.str());
    }
    acc += node.weight * v;
  }
  return acc;
}

}  // namespace cshape
