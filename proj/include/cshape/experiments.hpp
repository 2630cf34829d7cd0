#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "cshape/channel.hpp"
#include "cshape/constellation.hpp"
#include "cshape/error.hpp"
#include "cshape/metrics.hpp"
#include "cshape/solvers.hpp"
#include "cshape/warden_sim.hpp"

namespace cshape {

/// Bad config file, key or value. The CLI maps it to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// INI-style config: [section] headers, key = value lines, '#' or ';'
/// starting a comment anywhere on a line. Keys are addressed as
/// "section.key". Lists are comma-separated.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text, const std::string& origin = "<string>");

  /// "section.key=value"; replaces any value from the file.
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  double require_double(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Absent -> empty; present but empty -> ConfigError.
  std::vector<double> get_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  /// Throws on any section or key outside the documented schema.
  void check_known() const;

 private:
  boost::property_tree::ptree tree_;
  std::string origin_;
};

/// One fully resolved problem instance.
struct Scenario {
  ConstellationSet set{std::vector<cplx>{cplx(-1.0, 0.0), cplx(1.0, 0.0)}};
  int order = 2;
  double scale = 1.0;
  bool custom_points = false;
  double power_cap = 10.0;
  double sigma_w_sq = 1.0;
  double snr_db = 10.0;
  double sigma_b_sq = 1.0;
  FadingSpec fading;
  std::uint64_t channel_seed = 1;
  std::optional<ChannelRealization> fixed_channel;
  QuadratureConfig quad;
  Objective objective = Objective::exact;
  CovertnessSpec covert;
  SolverConfig solver;

  ChannelRealization channel() const;
  std::shared_ptr<const MetricContext> context() const;
  ProblemSpec problem() const;

  Scenario with_order(int k) const;
  Scenario with_snr(double db) const;
  Scenario with_budget(CovertDirection d, double budget) const;
};

Scenario load_scenario(const Config& cfg);

/// Parses "p1, p2, ..." into a probability vector of the given size.
Eigen::VectorXd parse_probability_list(const std::string& text, std::size_t expected);
/// Reads "p_opt" from an optimize result file, or a bare JSON array.
Eigen::VectorXd read_probability_file(const std::string& path, std::size_t expected);

// optimize ---------------------------------------------------------------------

struct OptimizeOutput {
  Scenario scenario;
  SolveResult result;
  DesignEvaluation equiprobable;
};

OptimizeOutput run_optimize(const Scenario& s);
nlohmann::json optimize_json(const OptimizeOutput& o);
std::string optimize_summary(const OptimizeOutput& o);

// sweep ------------------------------------------------------------------------

struct SweepRow {
  int k = 0;
  CovertDirection direction = CovertDirection::h0_h1;
  double snr_db = 0.0;
  double budget = 0.0;
  Objective objective = Objective::exact;
  std::string status;
  double rate = 0.0;
  double rate_exact = 0.0;
  double constrained_bound = 0.0;
  double exact_divergence = 0.0;
  bool bound_audit = false;
  int outer_iterations = 0;
  int iterations = 0;
  std::string message;
};

struct SweepPlan {
  std::vector<int> orders;
  std::vector<CovertDirection> directions;
  std::vector<double> snr_db;
  std::vector<double> budgets;
};

/// Grid from the [sweep] section, falling back to the scenario's own value
/// on any axis that is not listed. At least one axis must be listed.
SweepPlan load_sweep_plan(const Config& cfg, const Scenario& base);
/// Rows in plan order (K, direction, SNR, budget), whatever `threads` is.
std::vector<SweepRow> run_sweep(const Scenario& base, const SweepPlan& plan, int threads);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

// cdf --------------------------------------------------------------------------

DivergenceCdf run_cdf(const Scenario& s, int n_realizations, std::uint64_t seed, int threads);
void write_cdf_curves_csv(std::ostream& os, const DivergenceCdf& cdf);
void write_cdf_realizations_csv(std::ostream& os, const DivergenceCdf& cdf);
std::string cdf_summary(const Scenario& s, const DivergenceCdf& cdf);

// bench ------------------------------------------------------------------------

struct BenchRow {
  Objective objective = Objective::exact;
  CovertDirection direction = CovertDirection::h0_h1;
  double budget = 0.0;
  double median_seconds = 0.0;
  int runs = 0;
  std::string status;
  double rate = 0.0;
};

/// A budget halfway between the smallest reachable value of the constrained
/// bound and its value at the unconstrained optimum, so the constraint is
/// feasible and active.
double active_budget(const Scenario& s, CovertDirection d);

/// Every objective x direction on one instance: `warmup` untimed solves, then
/// the median of `runs` timed ones. A non-finite scenario budget means
/// active_budget per direction.
std::vector<BenchRow> run_bench(const Scenario& s, int runs, int warmup);
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);

// warden -----------------------------------------------------------------------

struct WardenOutput {
  DetectionReport report;
  double kl_h0_h1 = 0.0;
  double kl_h1_h0 = 0.0;
  double pinsker_floor = 0.0;  // 1 - sqrt(min(D01, D10) / 2)
  bool pinsker_ok = false;     // xi_opt >= floor - 3 stderr
  bool covert_ok = true;       // xi_opt >= 1 - eps - 3 stderr, when a budget is set
};

WardenOutput run_warden(const Scenario& s, const Eigen::VectorXd& p, TvMethod method, std::int64_t samples,
                        std::uint64_t seed);
nlohmann::json warden_json(const Scenario& s, const WardenOutput& w);
std::string pinsker_line(const WardenOutput& w);

// eval -------------------------------------------------------------------------

nlohmann::json eval_json(const Scenario& s, const Eigen::VectorXd& p);

}  // namespace cshape
