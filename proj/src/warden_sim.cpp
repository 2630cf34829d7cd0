#include "cshape/warden_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "cshape/error.hpp"
#include "cshape/parallel.hpp"

namespace cshape {

namespace {

constexpr std::int64_t kChunk = 1 << 16;
constexpr double kTvTol = 1e-5;
constexpr int kTvMaxIntervals = 4096;

template <typename Fn>
void for_each_chunk(std::int64_t n, Fn&& fn) {
  for (std::int64_t c = 0, first = 0; first < n; ++c, first += kChunk)
    fn(static_cast<std::uint64_t>(c), std::min(kChunk, n - first));
}

double trapezoid_tv(const HypothesisModel& m, int intervals) {
  const double sigma = std::sqrt(m.sigma_sq());
  double re_lo = 0.0, re_hi = 0.0, im_lo = 0.0, im_hi = 0.0;
  for (const cplx& mu : m.means()) {
    re_lo = std::min(re_lo, mu.real());
    re_hi = std::max(re_hi, mu.real());
    im_lo = std::min(im_lo, mu.imag());
    im_hi = std::max(im_hi, mu.imag());
  }
  re_lo -= 8.0 * sigma, re_hi += 8.0 * sigma, im_lo -= 8.0 * sigma, im_hi += 8.0 * sigma;
  const int n = intervals + 1;
  const double hx = (re_hi - re_lo) / intervals, hy = (im_hi - im_lo) / intervals;
  const auto K = static_cast<Eigen::Index>(m.means().size());

  // exp(-|y - mu|^2 / s^2) factors into a real-axis and an imaginary-axis term.
  Eigen::MatrixXd ex(n, K), ey(n, K);
  Eigen::VectorXd ex0(n), ey0(n), wx(n), wy(n);
  for (int i = 0; i < n; ++i) {
    const double a = re_lo + i * hx, b = im_lo + i * hy;
    ex0[i] = std::exp(-a * a / m.sigma_sq());
    ey0[i] = std::exp(-b * b / m.sigma_sq());
    for (Eigen::Index k = 0; k < K; ++k) {
      const cplx& mu = m.means()[static_cast<std::size_t>(k)];
      ex(i, k) = std::exp(-(a - mu.real()) * (a - mu.real()) / m.sigma_sq());
      ey(i, k) = std::exp(-(b - mu.imag()) * (b - mu.imag()) / m.sigma_sq());
    }
    wx[i] = (i == 0 || i == n - 1) ? 0.5 * hx : hx;
    wy[i] = (i == 0 || i == n - 1) ? 0.5 * hy : hy;
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd p1 = ey * ex.row(i).transpose().cwiseProduct(m.weights());
    const Eigen::VectorXd p0 = ex0[i] * ey0;
    total += wx[i] * wy.dot((p1 - p0).cwiseAbs());
  }
  return 0.5 * total / (std::numbers::pi * m.sigma_sq());
}

}  // namespace

HypothesisModel::HypothesisModel(std::vector<cplx> means, Eigen::VectorXd weights, double sigma_sq)
    : means_(std::move(means)), weights_(std::move(weights)), sigma_sq_(sigma_sq) {
  if (means_.empty()) throw Error("hypothesis model needs at least one component");
  if (static_cast<std::size_t>(weights_.size()) != means_.size())
    throw Error("hypothesis model has " + std::to_string(means_.size()) + " means but " +
                std::to_string(weights_.size()) + " weights");
  weights_ = ProbabilityVector(weights_).vector();
  if (!(sigma_sq_ > 0.0) || !std::isfinite(sigma_sq_)) throw Error("sigma_w_sq must be positive");
  cumulative_.resize(weights_.size());
  double acc = 0.0;
  for (Eigen::Index k = 0; k < weights_.size(); ++k) cumulative_[k] = acc += weights_[k];
  cumulative_[weights_.size() - 1] = 1.0;
}

HypothesisModel HypothesisModel::from_context(const MetricContext& ctx, const Eigen::VectorXd& p) {
  std::vector<cplx> means;
  for (const cplx& x : ctx.set().points()) means.push_back(ctx.channel().g_w * x);
  return HypothesisModel(std::move(means), p, ctx.noise().sigma_w_sq());
}

double HypothesisModel::density_h0(cplx y) const {
  return std::exp(-std::norm(y) / sigma_sq_) / (std::numbers::pi * sigma_sq_);
}

double HypothesisModel::density_h1(cplx y) const {
  double s = 0.0;
  for (std::size_t k = 0; k < means_.size(); ++k)
    s += weights_[static_cast<Eigen::Index>(k)] * std::exp(-std::norm(y - means_[k]) / sigma_sq_);
  return s / (std::numbers::pi * sigma_sq_);
}

double HypothesisModel::log_ratio(cplx y) const {
  // log sum_k p_k exp((|y|^2 - |y - mu_k|^2) / s^2)
  double top = -std::numeric_limits<double>::infinity();
  thread_local std::vector<double> e;
  e.assign(means_.size(), 0.0);
  for (std::size_t k = 0; k < means_.size(); ++k) {
    const double w = weights_[static_cast<Eigen::Index>(k)];
    e[k] = w > 0.0 ? std::log(w) + (2.0 * (y * std::conj(means_[k])).real() - std::norm(means_[k])) / sigma_sq_
                   : -std::numeric_limits<double>::infinity();
    top = std::max(top, e[k]);
  }
  double s = 0.0;
  for (double v : e) s += std::exp(v - top);
  return top + std::log(s);
}

cplx HypothesisModel::sample_h0(SplitMix64& rng) const {
  const double s = std::sqrt(0.5 * sigma_sq_);
  const double a = rng.normal();
  return {s * a, s * rng.normal()};
}

cplx HypothesisModel::sample_h1(SplitMix64& rng) const {
  const double u = rng.uniform();
  const auto* it = std::upper_bound(cumulative_.data(), cumulative_.data() + cumulative_.size(), u);
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.data()), means_.size() - 1);
  return means_[k] + sample_h0(rng);
}

std::string to_string(TvMethod m) { return m == TvMethod::quadrature ? "quadrature" : "monte_carlo"; }

TvMethod parse_tv_method(const std::string& s) {
  if (s == "quadrature") return TvMethod::quadrature;
  if (s == "monte_carlo" || s == "mc") return TvMethod::monte_carlo;
  throw Error("unknown total-variation method '" + s + "' (expected quadrature or monte_carlo)");
}

TvEstimate total_variation(const HypothesisModel& model, TvMethod method, std::int64_t budget, std::uint64_t seed) {
  if (method == TvMethod::quadrature) {
    double prev = trapezoid_tv(model, 64);
    for (int n = 128; n <= kTvMaxIntervals; n *= 2) {
      const double cur = trapezoid_tv(model, n);
      if (std::abs(cur - prev) < kTvTol) return {std::clamp(cur, 0.0, 1.0), 0.0};
      prev = cur;
    }
    return {std::clamp(prev, 0.0, 1.0), 0.0};
  }
  if (budget < 2) throw Error("Monte Carlo total variation needs at least 2 samples");
  double sum = 0.0, sum_sq = 0.0;
  for_each_chunk(budget, [&](std::uint64_t c, std::int64_t count) {
    SplitMix64 rng(derive_seed(seed, c));
    for (std::int64_t i = 0; i < count; ++i) {
      const double v = std::max(0.0, 1.0 - std::exp(model.log_ratio(model.sample_h0(rng))));
      sum += v;
      sum_sq += v * v;
    }
  });
  const double n = static_cast<double>(budget);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

double LrtOutcome::std_error() const {
  if (trials <= 0) return 0.0;
  const double n = static_cast<double>(trials);
  return std::sqrt((fa * (1.0 - fa) + md * (1.0 - md)) / n);
}

LrtOutcome simulate_lrt(const HypothesisModel& model, std::int64_t n_trials, std::uint64_t seed, double threshold) {
  if (n_trials < 1) throw Error("n_trials must be at least 1");
  if (!(threshold >= 0.0)) throw Error("likelihood-ratio threshold must be nonnegative");
  const double log_t = std::log(threshold);
  std::int64_t false_alarms = 0, misses = 0;
  for_each_chunk(n_trials, [&](std::uint64_t c, std::int64_t count) {
    SplitMix64 h0(derive_seed(seed, 2 * c)), h1(derive_seed(seed, 2 * c + 1));
    for (std::int64_t i = 0; i < count; ++i) {
      if (model.log_ratio(model.sample_h0(h0)) > log_t) ++false_alarms;
      if (!(model.log_ratio(model.sample_h1(h1)) > log_t)) ++misses;
    }
  });
  const double n = static_cast<double>(n_trials);
  return {static_cast<double>(false_alarms) / n, static_cast<double>(misses) / n, n_trials};
}

DetectionReport detection_error_opt(const HypothesisModel& model, TvMethod method, std::int64_t budget,
                                    std::uint64_t seed) {
  const TvEstimate tv = total_variation(model, method, budget, derive_seed(seed, 0));
  const LrtOutcome lrt = simulate_lrt(model, budget, derive_seed(seed, 1));
  DetectionReport r;
  r.tv = tv.tv;
  r.xi_opt = 1.0 - tv.tv;
  r.empirical_fa = lrt.fa;
  r.empirical_md = lrt.md;
  r.mc_stderr = tv.std_error;
  r.lrt_stderr = lrt.std_error();
  r.samples = budget;
  r.method = to_string(method);
  return r;
}

void to_json(nlohmann::json& j, const DetectionReport& r) {
  j = {{"tv", r.tv},
       {"xi_opt", r.xi_opt},
       {"empirical_fa", r.empirical_fa},
       {"empirical_md", r.empirical_md},
       {"mc_stderr", r.mc_stderr},
       {"lrt_stderr", r.lrt_stderr},
       {"samples", r.samples},
       {"method", r.method}};
}

void from_json(const nlohmann::json& j, DetectionReport& r) {
  r.tv = j.at("tv").get<double>();
  r.xi_opt = j.at("xi_opt").get<double>();
  r.empirical_fa = j.at("empirical_fa").get<double>();
  r.empirical_md = j.at("empirical_md").get<double>();
  r.mc_stderr = j.at("mc_stderr").get<double>();
  r.lrt_stderr = j.at("lrt_stderr").get<double>();
  r.samples = j.at("samples").get<std::int64_t>();
  r.method = j.at("method").get<std::string>();
}

CdfCurve empirical_cdf(std::string label, std::vector<double> values) {
  std::sort(values.begin(), values.end());
  CdfCurve c{std::move(label), std::move(values), {}};
  const double n = static_cast<double>(c.values.size());
  for (std::size_t i = 0; i < c.values.size(); ++i) c.levels.push_back(static_cast<double>(i + 1) / n);
  return c;
}

DivergenceCdf divergence_cdf(const CdfScenario& scenario, int n_realizations, std::uint64_t seed, int threads) {
  if (n_realizations < 1) throw Error("n_realizations must be at least 1");
  const NoiseModel noise(scenario.sigma_b_sq, scenario.sigma_w_sq);
  const Eigen::VectorXd uniform = equiprobable(scenario.set.size()).vector();

  DivergenceCdf out;
  out.realizations.resize(static_cast<std::size_t>(n_realizations));
  parallel_for(out.realizations.size(), threads, [&](std::size_t i) {
    CdfRealization& row = out.realizations[i];
    row.index = static_cast<int>(i);
    row.channel_seed = derive_seed(seed, i);
    row.channel = sample_rayleigh(scenario.fading, row.channel_seed);
    ProblemSpec spec;
    spec.objective = scenario.objective;
    spec.covert = scenario.covert;
    spec.solver = scenario.solver;
    spec.ctx = std::make_shared<const MetricContext>(scenario.set, scenario.power_cap, row.channel, noise,
                                                     scenario.quad);
    const SolveResult r = solve(spec);
    row.status = r.status;
    row.censored = r.status == SolveStatus::infeasible;
    if (!row.censored) {
      row.optimized_bound = r.constrained_bound;
      row.optimized_exact = r.exact_divergence;
    } else {
      row.optimized_bound = row.optimized_exact = std::numeric_limits<double>::quiet_NaN();
    }
    const DesignEvaluation eq = evaluate_design(*spec.ctx, scenario.covert, uniform);
    row.equiprobable_bound = eq.constrained_bound;
    row.equiprobable_exact = eq.exact_divergence;
  });

  std::vector<double> opt_exact, opt_bound, eq_exact, eq_bound;
  int violations = 0;
  for (const CdfRealization& row : out.realizations) {
    if (row.censored) {
      ++out.censored;
    } else {
      opt_exact.push_back(row.optimized_exact);
      opt_bound.push_back(row.optimized_bound);
    }
    eq_exact.push_back(row.equiprobable_exact);
    eq_bound.push_back(row.equiprobable_bound);
    if (row.equiprobable_exact > scenario.covert.budget) ++violations;
  }
  out.equiprobable_violation_fraction = static_cast<double>(violations) / n_realizations;
  out.curves.push_back(empirical_cdf("optimized_exact", std::move(opt_exact)));
  out.curves.push_back(empirical_cdf("optimized_bound", std::move(opt_bound)));
  out.curves.push_back(empirical_cdf("equiprobable_exact", std::move(eq_exact)));
  out.curves.push_back(empirical_cdf("equiprobable_bound", std::move(eq_bound)));
  return out;
}

}  // namespace cshape
