#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cshape/channel.hpp"
#include "cshape/constellation.hpp"
#include "cshape/metrics.hpp"
#include "cshape/quadrature.hpp"
#include "cshape/rng.hpp"
#include "cshape/solvers.hpp"

namespace cshape {

/// Willie's observation y_w under each hypothesis:
///   H0: y ~ CN(0, sigma^2)
///   H1: y ~ sum_k p_k CN(g_w x_k, sigma^2)
class HypothesisModel {
 public:
  HypothesisModel(std::vector<cplx> means, Eigen::VectorXd weights, double sigma_sq);
  static HypothesisModel from_context(const MetricContext& ctx, const Eigen::VectorXd& p);

  const std::vector<cplx>& means() const { return means_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  double sigma_sq() const { return sigma_sq_; }

  double density_h0(cplx y) const;
  double density_h1(cplx y) const;
  /// log(p1(y) / p0(y)), evaluated without forming either density.
  double log_ratio(cplx y) const;

  cplx sample_h0(SplitMix64& rng) const;
  cplx sample_h1(SplitMix64& rng) const;

 private:
  std::vector<cplx> means_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd cumulative_;
  double sigma_sq_;
};

enum class TvMethod { quadrature, monte_carlo };
std::string to_string(TvMethod m);
TvMethod parse_tv_method(const std::string& s);

struct TvEstimate {
  double tv = 0.0;
  double std_error = 0.0;  // zero for quadrature
};

/// Half the L1 distance between the two densities. Quadrature integrates
/// |p0 - p1| / 2 on a box covering every mean +- 8 sigma, doubling the grid
/// until the value moves by less than 1e-5. Monte Carlo averages
/// max(0, 1 - p1/p0) over `budget` draws from H0.
TvEstimate total_variation(const HypothesisModel& model, TvMethod method, std::int64_t budget, std::uint64_t seed);

struct LrtOutcome {
  double fa = 0.0;  // Pr(D1 | H0)
  double md = 0.0;  // Pr(D0 | H1)
  std::int64_t trials = 0;
  /// Standard error of fa + md.
  double std_error() const;
};

/// Decides D1 iff p1(y) > threshold * p0(y); ties go to D0. `n_trials` draws
/// per hypothesis.
LrtOutcome simulate_lrt(const HypothesisModel& model, std::int64_t n_trials, std::uint64_t seed,
                        double threshold = 1.0);

struct DetectionReport {
  double tv = 0.0;
  double xi_opt = 1.0;
  double empirical_fa = 0.0;
  double empirical_md = 0.0;
  double mc_stderr = 0.0;   // of the total-variation estimate
  double lrt_stderr = 0.0;  // of empirical_fa + empirical_md
  std::int64_t samples = 0;
  std::string method;
};

/// xi_opt = 1 - tv, plus a likelihood-ratio test run with `budget` trials.
DetectionReport detection_error_opt(const HypothesisModel& model, TvMethod method, std::int64_t budget,
                                    std::uint64_t seed);

void to_json(nlohmann::json& j, const DetectionReport& r);
void from_json(const nlohmann::json& j, DetectionReport& r);

/// Everything needed to rebuild a shaping problem for one fading draw.
struct CdfScenario {
  ConstellationSet set;
  double power_cap = 10.0;
  double sigma_b_sq = 1.0;
  double sigma_w_sq = 1.0;
  FadingSpec fading;
  QuadratureConfig quad;
  Objective objective = Objective::exact;
  CovertnessSpec covert;
  SolverConfig solver;
};

struct CdfRealization {
  int index = 0;
  std::uint64_t channel_seed = 0;
  ChannelRealization channel;
  SolveStatus status = SolveStatus::converged;
  bool censored = false;  // infeasible: no optimized design
  double optimized_bound = 0.0;
  double optimized_exact = 0.0;
  double equiprobable_bound = 0.0;
  double equiprobable_exact = 0.0;
};

struct CdfCurve {
  std::string label;
  std::vector<double> values;  // ascending
  std::vector<double> levels;  // i / n for the i-th value
};

struct DivergenceCdf {
  std::vector<CdfRealization> realizations;  // in index order
  std::vector<CdfCurve> curves;  // optimized_exact, optimized_bound, equiprobable_exact, equiprobable_bound
  int censored = 0;
  double equiprobable_violation_fraction = 0.0;  // exact divergence above the budget
};

/// Channel seed i is derive_seed(seed, i). Optimized curves are built from the
/// uncensored realizations only. `threads` <= 0 means one.
DivergenceCdf divergence_cdf(const CdfScenario& scenario, int n_realizations, std::uint64_t seed, int threads = 1);

CdfCurve empirical_cdf(std::string label, std::vector<double> values);

}  // namespace cshape
