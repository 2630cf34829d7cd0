#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace cshape {

enum class QuadratureScheme { gauss_hermite, truncated_box, monte_carlo };

std::string to_string(QuadratureScheme s);
QuadratureScheme parse_quadrature_scheme(const std::string& s);

/// How E_z{f(z)} for z ~ CN(0, sigma^2) is discretized.
///
/// `order` is the node count per axis (gauss_hermite, truncated_box) or the
/// sample count (monte_carlo). `tau1` / `tau2` are the half-widths of the
/// truncated_box integration square, in units of the noise standard deviation
/// sigma; tau1 applies to objective integrals and tau2 to gradient integrals.
/// Gauss-Hermite and Monte Carlo ignore them.
struct QuadratureConfig {
  QuadratureScheme scheme = QuadratureScheme::gauss_hermite;
  int order = 24;
  double tau1 = 6.0;
  double tau2 = 6.0;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class IntegralRole { objective, gradient };

struct GaussianNode {
  std::complex<double> z;
  double weight;
};

/// Nodes and weights such that sum_i w_i f(z_i) approximates E_z{f(z)} with
/// density (1 / (pi sigma^2)) exp(-|z|^2 / sigma^2).
std::vector<GaussianNode> gaussian_nodes(double sigma_sq, const QuadratureConfig& cfg,
                                         IntegralRole role = IntegralRole::objective);

/// Throws NumericalError naming the node if f is not finite there.
double complex_gaussian_expectation(const std::function<double(std::complex<double>)>& f,
                                    double sigma_sq, const QuadratureConfig& cfg);

struct GaussHermiteRule {
  std::vector<double> nodes;    // ascending
  std::vector<double> weights;  // for the weight function exp(-x^2); sum to sqrt(pi)
};

/// 1 <= order <= 64.
GaussHermiteRule gauss_hermite_nodes(int order);

}  // namespace cshape
