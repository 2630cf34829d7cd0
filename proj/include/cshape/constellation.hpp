#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace cshape {

using cplx = std::complex<double>;

inline constexpr double kSimplexTol = 1e-9;
inline constexpr double kOrbitTol = 1e-9;

/// Fixed constellation points x_1..x_K. Points are finite and pairwise
/// distinct.
class ConstellationSet {
 public:
  explicit ConstellationSet(std::vector<cplx> points);

  std::size_t size() const { return points_.size(); }
  std::span<const cplx> points() const { return points_; }
  const cplx& operator[](std::size_t k) const { return points_[k]; }

  /// |x_k|^2 for every point.
  Eigen::VectorXd squared_magnitudes() const;

 private:
  std::vector<cplx> points_;
};

/// A point of the probability simplex: nonnegative entries summing to one.
class ProbabilityVector {
 public:
  explicit ProbabilityVector(Eigen::VectorXd p, double tol = kSimplexTol);
  explicit ProbabilityVector(const std::vector<double>& p, double tol = kSimplexTol);

  std::size_t size() const { return static_cast<std::size_t>(p_.size()); }
  const Eigen::VectorXd& vector() const { return p_; }
  double operator[](std::size_t k) const { return p_[static_cast<Eigen::Index>(k)]; }
  std::vector<double> to_std() const { return {p_.data(), p_.data() + p_.size()}; }

 private:
  Eigen::VectorXd p_;
};

/// Points, their probabilities, and the average-power cap P_A.
class ShapedConstellation {
 public:
  ShapedConstellation(ConstellationSet set, ProbabilityVector prob, double power_cap);

  const ConstellationSet& set() const { return set_; }
  const ProbabilityVector& prob() const { return prob_; }
  double power_cap() const { return power_cap_; }

 private:
  ConstellationSet set_;
  ProbabilityVector prob_;
  double power_cap_;
};

/// QAM on the odd-integer grid, times `scale`. Supported orders: 2 (antipodal
/// on the real axis), 8 (rectangular {+-1,+-3} x {+-1}) and every square M^2.
/// Points are ordered with the imaginary part as the outer (slow) index and
/// the real part ascending within a row.
ConstellationSet make_qam(int order, double scale = 1.0);

ProbabilityVector equiprobable(std::size_t K);

double average_power(const ShapedConstellation& sc);
double average_power(const ConstellationSet& set, const Eigen::VectorXd& p);

/// Groups point indices that no metric in this library can tell apart: equal
/// modulus and equal multiset of distances to all points (within `tol`).
/// Orbits are listed in order of their smallest index.
std::vector<std::vector<std::size_t>> symmetry_orbits(const ConstellationSet& set,
                                                      double tol = kOrbitTol);

void to_json(nlohmann::json& j, const ConstellationSet& set);
ConstellationSet constellation_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const ProbabilityVector& p);
ProbabilityVector probability_from_json(const nlohmann::json& j);

}  // namespace cshape
