#include "cshape/constellation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cshape/error.hpp"

namespace cshape {

ConstellationSet::ConstellationSet(std::vector<cplx> points) : points_(std::move(points)) {
  if (points_.empty()) throw Error("constellation must contain at least one point");
  for (std::size_t k = 0; k < points_.size(); ++k) {
    if (!std::isfinite(points_[k].real()) || !std::isfinite(points_[k].imag()))
      throw Error("constellation point " + std::to_string(k) + " is not finite");
    for (std::size_t j = 0; j < k; ++j) {
      if (points_[j] == points_[k])
        throw Error("constellation points " + std::to_string(j) + " and " +
                    std::to_string(k) + " coincide");
    }
  }
}

Eigen::VectorXd ConstellationSet::squared_magnitudes() const {
  Eigen::VectorXd w(static_cast<Eigen::Index>(points_.size()));
  for (std::size_t k = 0; k < points_.size(); ++k) w[static_cast<Eigen::Index>(k)] = std::norm(points_[k]);
  return w;
}

ProbabilityVector::ProbabilityVector(Eigen::VectorXd p, double tol) : p_(std::move(p)) {
  if (p_.size() == 0) throw Error("probability vector is empty");
  for (Eigen::Index k = 0; k < p_.size(); ++k) {
    if (!std::isfinite(p_[k]) || p_[k] < 0.0)
      throw Error("probability entry " + std::to_string(k) + " is negative or not finite");
  }
  if (std::abs(p_.sum() - 1.0) > tol)
    throw Error("probabilities sum to " + std::to_string(p_.sum()) + ", expected 1");
}

ProbabilityVector::ProbabilityVector(const std::vector<double>& p, double tol)
    : ProbabilityVector(Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())),
                        tol) {}

ShapedConstellation::ShapedConstellation(ConstellationSet set, ProbabilityVector prob, double power_cap)
    : set_(std::move(set)), prob_(std::move(prob)), power_cap_(power_cap) {
  if (prob_.size() != set_.size()) throw Error("probability vector size does not match constellation");
  if (!(power_cap_ >= 0.0)) throw Error("power cap must be nonnegative");
  if (average_power(set_, prob_.vector()) > power_cap_ + 1e-9)
    throw Error("average power exceeds the power cap");
}

ConstellationSet make_qam(int order, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error("QAM scale must be positive");
  std::vector<cplx> pts;
  auto odd_levels = [](int m) {
    std::vector<double> levels;
    for (int i = 0; i < m; ++i) levels.push_back(2.0 * i - (m - 1));
    return levels;
  };
  if (order == 2) {
    pts = {{-1.0, 0.0}, {1.0, 0.0}};
  } else if (order == 8) {
    for (double im : odd_levels(2))
      for (double re : odd_levels(4)) pts.emplace_back(re, im);
  } else {
    const int m = static_cast<int>(std::lround(std::sqrt(static_cast<double>(std::max(order, 0)))));
    if (order < 4 || m * m != order)
      throw Error("unsupported QAM order " + std::to_string(order) +
                  "; supported: 2, 8, and square orders M^2 (4, 16, 64, ...)");
    const auto levels = odd_levels(m);
    for (double im : levels)
      for (double re : levels) pts.emplace_back(re, im);
  }
  for (auto& x : pts) x *= scale;
  return ConstellationSet(std::move(pts));
}

ProbabilityVector equiprobable(std::size_t K) {
  if (K == 0) throw Error("equiprobable distribution needs K >= 1");
  return ProbabilityVector(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(K), 1.0 / static_cast<double>(K)));
}

double average_power(const ConstellationSet& set, const Eigen::VectorXd& p) {
  return p.dot(set.squared_magnitudes());
}

double average_power(const ShapedConstellation& sc) { return average_power(sc.set(), sc.prob().vector()); }

std::vector<std::vector<std::size_t>> symmetry_orbits(const ConstellationSet& set, double tol) {
  const std::size_t K = set.size();
  std::vector<std::vector<double>> signature(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < K; ++j) signature[k].push_back(std::abs(set[k] - set[j]));
    std::sort(signature[k].begin(), signature[k].end());
  }
  auto same = [&](std::size_t a, std::size_t b) {
    if (std::abs(std::abs(set[a]) - std::abs(set[b])) > tol) return false;
    for (std::size_t i = 0; i < K; ++i)
      if (std::abs(signature[a][i] - signature[b][i]) > tol) return false;
    return true;
  };

  std::vector<std::vector<std::size_t>> orbits;
  std::vector<bool> assigned(K, false);
  for (std::size_t k = 0; k < K; ++k) {
    if (assigned[k]) continue;
    std::vector<std::size_t> orbit{k};
    assigned[k] = true;
    for (std::size_t j = k + 1; j < K; ++j) {
      if (!assigned[j] && same(k, j)) {
        orbit.push_back(j);
        assigned[j] = true;
      }
    }
    orbits.push_back(std::move(orbit));
  }
  return orbits;
}

void to_json(nlohmann::json& j, const ConstellationSet& set) {
  j = nlohmann::json::array();
  for (const auto& x : set.points()) j.push_back({x.real(), x.imag()});
}

ConstellationSet constellation_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error("constellation JSON must be an array of [re, im] pairs");
  std::vector<cplx> pts;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      throw Error("constellation JSON entries must be [re, im] number pairs");
    pts.emplace_back(e[0].get<double>(), e[1].get<double>());
  }
  return ConstellationSet(std::move(pts));
}

void to_json(nlohmann::json& j, const ProbabilityVector& p) { j = p.to_std(); }

ProbabilityVector probability_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error("probability JSON must be an array of numbers");
  std::vector<double> v;
  for (const auto& e : j) {
    if (!e.is_number()) throw Error("probability JSON entries must be numbers");
    v.push_back(e.get<double>());
  }
  return ProbabilityVector(v);
}

}  // namespace cshape
