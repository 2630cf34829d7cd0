#include "cshape/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

#include "cshape/format.hpp"
#include "cshape/parallel.hpp"

namespace cshape {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"scenario",
       {"constellation", "order", "scale", "points", "power_cap", "sigma_w_sq", "snr_db", "sigma_b_sq",
        "fading_sigma1", "fading_sigma2", "channel_seed", "g_b", "g_w"}},
      {"covert", {"direction", "epsilon", "budget"}},
      {"solver",
       {"objective", "alpha_bar", "rho", "c", "c2", "delta", "max_iters", "linesearch_grid", "max_outer",
        "single_shot_sca", "random_start_seed"}},
      {"quadrature", {"scheme", "order", "tau1", "tau2", "seed"}},
      {"sweep", {"orders", "directions", "snr_db", "epsilon", "budget"}},
      {"cdf", {"realizations", "seed"}},
      {"warden", {"method", "samples", "seed", "p", "p_file"}},
      {"bench", {"runs", "warmup"}},
      {"eval", {"p"}},
  };
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

double to_double(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError(what + ": expected a number, got '" + t + "'");
  return v;
}

long long to_int(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError(what + ": expected an integer, got '" + t + "'");
  return v;
}

cplx to_complex(const std::string& text, const std::string& what) {
  const auto parts = split(text, ',');
  if (parts.size() != 2) throw ConfigError(what + ": expected 're,im', got '" + text + "'");
  return {to_double(parts[0], what), to_double(parts[1], what)};
}

nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

nlohmann::json scenario_json(const Scenario& s) {
  auto pts = nlohmann::json::array();
  for (const cplx& x : s.set.points()) pts.push_back({x.real(), x.imag()});
  return {{"k", s.set.size()},
          {"points", pts},
          {"power_cap", s.power_cap},
          {"snr_db", num(s.snr_db)},
          {"sigma_b_sq", s.sigma_b_sq},
          {"sigma_w_sq", s.sigma_w_sq},
          {"channel", s.channel()},
          {"direction", to_string(s.covert.direction)},
          {"budget", num(s.covert.budget)},
          {"epsilon", num(s.covert.epsilon())},
          {"objective", to_string(s.objective)}};
}

double bound_for(const MetricContext& ctx, CovertDirection d, const Eigen::VectorXd& p) {
  return d == CovertDirection::h0_h1 ? kl_h0_h1_upper(ctx, p) : kl_h1_h0_upper(ctx, p);
}

}  // namespace

// Config ---------------------------------------------------------------------------

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str(), path);
}

Config Config::from_string(const std::string& text, const std::string& origin) {
  // Comments are dropped here, line by line, so parser line numbers still match.
  std::istringstream in(text);
  std::ostringstream clean;
  std::string line;
  while (std::getline(in, line)) {
    const auto cut = line.find_first_of("#;");
    clean << (cut == std::string::npos ? line : line.substr(0, cut)) << '\n';
  }
  Config c;
  c.origin_ = origin;
  std::istringstream parsed(clean.str());
  try {
    pt::read_ini(parsed, c.tree_);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  c.check_known();
  return c;
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  const auto dot = key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == key.size())
    throw ConfigError("config key '" + key + "' must look like section.key");
  const auto sec = schema().find(key.substr(0, dot));
  if (sec == schema().end() || !sec->second.count(key.substr(dot + 1)))
    throw ConfigError("unknown config key '" + key + "'");
  tree_.put(pt::ptree::path_type(key, '.'), value);
}

bool Config::has(const std::string& key) const {
  const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
  return v && !trim(*v).empty();
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? trim(tree_.get<std::string>(pt::ptree::path_type(key, '.'))) : fallback;
}

std::string Config::require_string(const std::string& key) const {
  if (!has(key)) throw ConfigError(origin_ + ": missing required key '" + key + "'");
  return get_string(key, "");
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? to_double(get_string(key, ""), origin_ + ": key '" + key + "'") : fallback;
}

double Config::require_double(const std::string& key) const {
  return to_double(require_string(key), origin_ + ": key '" + key + "'");
}

long long Config::get_int(const std::string& key, long long fallback) const {
  return has(key) ? to_int(get_string(key, ""), origin_ + ": key '" + key + "'") : fallback;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string t = get_string(key, "");
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw ConfigError(origin_ + ": key '" + key + "': expected a nonnegative integer, got '" + t + "'");
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string t = get_string(key, "");
  if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
  if (t == "false" || t == "no" || t == "0" || t == "off") return false;
  throw ConfigError(origin_ + ": key '" + key + "': expected true or false, got '" + t + "'");
}

std::vector<std::string> Config::get_string_list(const std::string& key) const {
  const auto raw = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
  if (!raw) return {};
  std::vector<std::string> out;
  for (const std::string& item : split(*raw, ','))
    if (!item.empty()) out.push_back(item);
  if (out.empty()) throw ConfigError(origin_ + ": key '" + key + "' is an empty list");
  return out;
}

std::vector<double> Config::get_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : get_string_list(key)) out.push_back(to_double(item, origin_ + ": key '" + key + "'"));
  return out;
}

void Config::check_known() const {
  for (const auto& [section, body] : tree_) {
    const auto sec = schema().find(section);
    if (sec == schema().end()) {
      if (body.empty()) throw ConfigError(origin_ + ": key '" + section + "' outside any section");
      throw ConfigError(origin_ + ": unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body)
      if (!sec->second.count(key)) throw ConfigError(origin_ + ": unknown key '" + section + "." + key + "'");
  }
}

// Scenario -------------------------------------------------------------------------

ChannelRealization Scenario::channel() const {
  return fixed_channel ? *fixed_channel : sample_rayleigh(fading, channel_seed);
}

std::shared_ptr<const MetricContext> Scenario::context() const {
  return std::make_shared<const MetricContext>(set, power_cap, channel(), NoiseModel(sigma_b_sq, sigma_w_sq), quad);
}

ProblemSpec Scenario::problem() const {
  ProblemSpec p;
  p.objective = objective;
  p.covert = covert;
  p.ctx = context();
  p.solver = solver;
  return p;
}

Scenario Scenario::with_order(int k) const {
  if (custom_points) throw ConfigError("cannot change K of a custom constellation");
  Scenario s = *this;
  s.order = k;
  s.set = make_qam(k, scale);
  return s;
}

Scenario Scenario::with_snr(double db) const {
  Scenario s = *this;
  s.snr_db = db;
  s.sigma_b_sq = sigma_b_from_snr(power_cap, db);
  return s;
}

Scenario Scenario::with_budget(CovertDirection d, double budget) const {
  Scenario s = *this;
  s.covert.direction = d;
  s.covert.budget = budget;
  return s;
}

Scenario load_scenario(const Config& cfg) {
  Scenario s;
  try {
    const std::string kind = cfg.get_string("scenario.constellation", "qam");
    s.scale = cfg.get_double("scenario.scale", 1.0);
    if (kind == "qam") {
      cfg.require_string("scenario.order");
      s.order = static_cast<int>(cfg.get_int("scenario.order", 0));
      s.set = make_qam(s.order, s.scale);
    } else if (kind == "points") {
      std::vector<cplx> pts;
      std::istringstream in(cfg.require_string("scenario.points"));
      std::string tok;
      while (in >> tok) pts.push_back(s.scale * to_complex(tok, "key 'scenario.points'"));
      s.set = ConstellationSet(std::move(pts));
      s.order = static_cast<int>(s.set.size());
      s.custom_points = true;
    } else {
      throw ConfigError("key 'scenario.constellation': expected qam or points, got '" + kind + "'");
    }
    s.power_cap = cfg.get_double("scenario.power_cap", 10.0);
    s.sigma_w_sq = cfg.get_double("scenario.sigma_w_sq", 1.0);
    if (cfg.has("scenario.sigma_b_sq")) {
      s.sigma_b_sq = cfg.get_double("scenario.sigma_b_sq", 1.0);
      s.snr_db = 10.0 * std::log10(s.power_cap / s.sigma_b_sq);
    } else {
      s = s.with_snr(cfg.require_double("scenario.snr_db"));
    }
    s.fading.sigma1 = cfg.get_double("scenario.fading_sigma1", 1.0);
    s.fading.sigma2 = cfg.get_double("scenario.fading_sigma2", 1.0);
    s.channel_seed = cfg.get_u64("scenario.channel_seed", 1);
    if (cfg.has("scenario.g_b") != cfg.has("scenario.g_w"))
      throw ConfigError("keys 'scenario.g_b' and 'scenario.g_w' must be given together");
    if (cfg.has("scenario.g_b"))
      s.fixed_channel = ChannelRealization{to_complex(cfg.get_string("scenario.g_b", ""), "key 'scenario.g_b'"),
                                           to_complex(cfg.get_string("scenario.g_w", ""), "key 'scenario.g_w'")};

    s.covert.direction = parse_direction(cfg.get_string("covert.direction", "h0_h1"));
    if (cfg.has("covert.epsilon") && cfg.has("covert.budget"))
      throw ConfigError("give either 'covert.epsilon' or 'covert.budget', not both");
    if (cfg.has("covert.epsilon"))
      s.covert = CovertnessSpec::from_epsilon(s.covert.direction, cfg.get_double("covert.epsilon", 0.0));
    else
      s.covert.budget = cfg.get_double("covert.budget", std::numeric_limits<double>::infinity());
    s.covert.validate();

    s.objective = parse_objective(cfg.get_string("solver.objective", "exact"));
    SolverConfig& sc = s.solver;
    sc.alpha_bar = cfg.get_double("solver.alpha_bar", sc.alpha_bar);
    sc.rho = cfg.get_double("solver.rho", sc.rho);
    sc.c = cfg.get_double("solver.c", sc.c);
    sc.c2 = cfg.get_double("solver.c2", sc.c2);
    sc.delta = cfg.get_double("solver.delta", sc.delta);
    sc.max_iters = static_cast<int>(cfg.get_int("solver.max_iters", sc.max_iters));
    sc.linesearch_grid = static_cast<int>(cfg.get_int("solver.linesearch_grid", sc.linesearch_grid));
    sc.max_outer = static_cast<int>(cfg.get_int("solver.max_outer", sc.max_outer));
    sc.single_shot_sca = cfg.get_bool("solver.single_shot_sca", sc.single_shot_sca);
    if (cfg.has("solver.random_start_seed")) sc.random_start_seed = cfg.get_u64("solver.random_start_seed", 0);
    sc.validate();

    s.quad.scheme = parse_quadrature_scheme(cfg.get_string("quadrature.scheme", to_string(s.quad.scheme)));
    s.quad.order = static_cast<int>(cfg.get_int("quadrature.order", s.quad.order));
    s.quad.tau1 = cfg.get_double("quadrature.tau1", s.quad.tau1);
    s.quad.tau2 = cfg.get_double("quadrature.tau2", s.quad.tau2);
    s.quad.seed = cfg.get_u64("quadrature.seed", s.quad.seed);
    s.quad.validate();
    static_cast<void>(NoiseModel(s.sigma_b_sq, s.sigma_w_sq));
    if (!(s.power_cap > 0.0)) throw ConfigError("key 'scenario.power_cap' must be positive");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return s;
}

Eigen::VectorXd parse_probability_list(const std::string& text, std::size_t expected) {
  std::vector<double> v;
  for (const std::string& item : split(text, ',')) {
    if (item.empty()) continue;
    v.push_back(to_double(item, "probability list"));
  }
  if (v.size() != expected)
    throw ConfigError("probability list has " + std::to_string(v.size()) + " entries, expected " +
                      std::to_string(expected));
  try {
    return ProbabilityVector(v).vector();
  } catch (const Error& e) {
    throw ConfigError(std::string("probability list: ") + e.what());
  }
}

Eigen::VectorXd read_probability_file(const std::string& path, std::size_t expected) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open probability file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("probability file '" + path + "': " + e.what());
  }
  const nlohmann::json* arr = &j;
  if (j.is_object()) {
    if (j.contains("result") && j["result"].contains("p_opt")) arr = &j["result"]["p_opt"];
    else if (j.contains("p_opt")) arr = &j["p_opt"];
    else throw ConfigError("probability file '" + path + "' has no p_opt");
  }
  if (!arr->is_array() || arr->empty()) throw ConfigError("probability file '" + path + "': p_opt is not a list");
  std::vector<double> v;
  for (const auto& x : *arr) {
    if (!x.is_number()) throw ConfigError("probability file '" + path + "': non-numeric entry");
    v.push_back(x.get<double>());
  }
  if (v.size() != expected)
    throw ConfigError("probability file '" + path + "' has " + std::to_string(v.size()) + " entries, expected " +
                      std::to_string(expected));
  try {
    return ProbabilityVector(v).vector();
  } catch (const Error& e) {
    throw ConfigError("probability file '" + path + "': " + e.what());
  }
}

// optimize -------------------------------------------------------------------------

OptimizeOutput run_optimize(const Scenario& s) {
  const ProblemSpec spec = s.problem();
  OptimizeOutput o{s, solve(spec), evaluate_design(*spec.ctx, s.covert, equiprobable(s.set.size()).vector())};
  return o;
}

nlohmann::json optimize_json(const OptimizeOutput& o) {
  return {{"scenario", scenario_json(o.scenario)}, {"result", o.result}, {"equiprobable", o.equiprobable}};
}

std::string optimize_summary(const OptimizeOutput& o) {
  const SolveResult& r = o.result;
  std::ostringstream os;
  os << "status=" << to_string(r.status) << " objective=" << to_string(o.scenario.objective)
     << " rate=" << fmt_num(r.objective_value) << " rate_exact=" << fmt_num(r.rate_exact)
     << " bound=" << fmt_num(r.constrained_bound) << " exact_divergence=" << fmt_num(r.exact_divergence)
     << " budget=" << fmt_num(o.scenario.covert.budget) << " direction=" << to_string(o.scenario.covert.direction);
  if (r.status != SolveStatus::infeasible)
    os << " budget_satisfied=" << (r.constrained_bound <= o.scenario.covert.budget + 1e-6 ? "yes" : "no");
  else
    os << " violated=" << r.violated_constraint;
  return os.str();
}

// sweep ----------------------------------------------------------------------------

SweepPlan load_sweep_plan(const Config& cfg, const Scenario& base) {
  SweepPlan plan;
  for (double k : cfg.get_list("sweep.orders")) {
    if (k != std::floor(k) || k < 1) throw ConfigError("key 'sweep.orders': '" + fmt_num(k) + "' is not a valid K");
    plan.orders.push_back(static_cast<int>(k));
  }
  for (const std::string& d : cfg.get_string_list("sweep.directions")) {
    try {
      plan.directions.push_back(parse_direction(d));
    } catch (const Error& e) {
      throw ConfigError(std::string("key 'sweep.directions': ") + e.what());
    }
  }
  plan.snr_db = cfg.get_list("sweep.snr_db");
  if (cfg.has("sweep.epsilon") && cfg.has("sweep.budget"))
    throw ConfigError("give either 'sweep.epsilon' or 'sweep.budget', not both");
  for (double e : cfg.get_list("sweep.epsilon")) {
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("key 'sweep.epsilon': " + fmt_num(e) + " is outside [0, 1]");
    plan.budgets.push_back(2.0 * e * e);
  }
  for (double b : cfg.get_list("sweep.budget")) {
    if (!(b >= 0.0)) throw ConfigError("key 'sweep.budget': " + fmt_num(b) + " is negative");
    plan.budgets.push_back(b);
  }
  if (plan.orders.empty() && plan.directions.empty() && plan.snr_db.empty() && plan.budgets.empty())
    throw ConfigError("sweep needs at least one of sweep.orders, sweep.directions, sweep.snr_db, "
                      "sweep.epsilon or sweep.budget");
  if (plan.orders.empty()) plan.orders.push_back(static_cast<int>(base.set.size()));
  if (plan.directions.empty()) plan.directions.push_back(base.covert.direction);
  if (plan.snr_db.empty()) plan.snr_db.push_back(base.snr_db);
  if (plan.budgets.empty()) plan.budgets.push_back(base.covert.budget);
  return plan;
}

std::vector<SweepRow> run_sweep(const Scenario& base, const SweepPlan& plan, int threads) {
  struct Point {
    int k;
    CovertDirection d;
    double snr;
    double budget;
  };
  std::vector<Point> points;
  for (int k : plan.orders)
    for (CovertDirection d : plan.directions)
      for (double snr : plan.snr_db)
        for (double b : plan.budgets) points.push_back({k, d, snr, b});

  std::vector<SweepRow> rows(points.size());
  parallel_for(points.size(), threads, [&](std::size_t i) {
    const Point& pt = points[i];
    SweepRow& row = rows[i];
    row.k = pt.k;
    row.direction = pt.d;
    row.snr_db = pt.snr;
    row.budget = pt.budget;
    row.objective = base.objective;
    row.rate = row.rate_exact = row.constrained_bound = row.exact_divergence = std::numeric_limits<double>::quiet_NaN();
    try {
      Scenario s = base;
      if (static_cast<std::size_t>(pt.k) != base.set.size()) s = s.with_order(pt.k);
      s = s.with_snr(pt.snr).with_budget(pt.d, pt.budget);
      const SolveResult r = solve(s.problem());
      row.status = to_string(r.status);
      row.rate = r.objective_value;
      row.rate_exact = r.rate_exact;
      row.constrained_bound = r.constrained_bound;
      row.exact_divergence = r.exact_divergence;
      row.bound_audit = r.status != SolveStatus::infeasible && r.bound_audit_passed;
      row.outer_iterations = r.outer_iterations;
      row.iterations = r.iterations;
      row.message = r.message;
    } catch (const Error& e) {
      row.status = "error";
      row.message = e.what();
    }
  });
  return rows;
}

namespace {

std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "# cshape sweep v1\n";
  os << "k,direction,snr_db,epsilon,budget,objective,status,rate,rate_exact,constrained_bound,exact_divergence,"
        "bound_audit,outer_iterations,iterations,message\n";
  for (const SweepRow& r : rows)
    os << r.k << ',' << to_string(r.direction) << ',' << fmt_num(r.snr_db) << ',' << fmt_num(std::sqrt(r.budget / 2.0))
       << ',' << fmt_num(r.budget) << ',' << to_string(r.objective) << ',' << r.status << ',' << fmt_num(r.rate) << ','
       << fmt_num(r.rate_exact) << ',' << fmt_num(r.constrained_bound) << ',' << fmt_num(r.exact_divergence) << ','
       << (r.bound_audit ? 1 : 0) << ',' << r.outer_iterations << ',' << r.iterations << ',' << csv_text(r.message)
       << '\n';
}

// cdf ------------------------------------------------------------------------------

DivergenceCdf run_cdf(const Scenario& s, int n_realizations, std::uint64_t seed, int threads) {
  CdfScenario c{s.set, s.power_cap, s.sigma_b_sq, s.sigma_w_sq, s.fading, s.quad, s.objective, s.covert, s.solver};
  return divergence_cdf(c, n_realizations, seed, threads);
}

void write_cdf_curves_csv(std::ostream& os, const DivergenceCdf& cdf) {
  os << "# cshape cdf_curves v1\n";
  os << "curve,value,level\n";
  for (const CdfCurve& c : cdf.curves)
    for (std::size_t i = 0; i < c.values.size(); ++i)
      os << c.label << ',' << fmt_num(c.values[i]) << ',' << fmt_num(c.levels[i]) << '\n';
}

void write_cdf_realizations_csv(std::ostream& os, const DivergenceCdf& cdf) {
  os << "# cshape cdf_realizations v1\n";
  os << "index,channel_seed,g_b_re,g_b_im,g_w_re,g_w_im,status,censored,optimized_bound,optimized_exact,"
        "equiprobable_bound,equiprobable_exact\n";
  for (const CdfRealization& r : cdf.realizations)
    os << r.index << ',' << r.channel_seed << ',' << fmt_num(r.channel.g_b.real()) << ','
       << fmt_num(r.channel.g_b.imag()) << ',' << fmt_num(r.channel.g_w.real()) << ',' << fmt_num(r.channel.g_w.imag())
       << ',' << to_string(r.status) << ',' << (r.censored ? 1 : 0) << ',' << fmt_num(r.optimized_bound) << ','
       << fmt_num(r.optimized_exact) << ',' << fmt_num(r.equiprobable_bound) << ',' << fmt_num(r.equiprobable_exact)
       << '\n';
}

std::string cdf_summary(const Scenario& s, const DivergenceCdf& cdf) {
  int over = 0;
  for (const CdfRealization& r : cdf.realizations)
    if (!r.censored && r.optimized_bound > s.covert.budget + 1e-6) ++over;
  std::ostringstream os;
  os << "realizations=" << cdf.realizations.size() << " censored=" << cdf.censored
     << " optimized_over_budget=" << over << " equiprobable_violation_fraction="
     << fmt_num(cdf.equiprobable_violation_fraction) << " budget=" << fmt_num(s.covert.budget)
     << " direction=" << to_string(s.covert.direction);
  return os.str();
}

// bench ----------------------------------------------------------------------------

double active_budget(const Scenario& s, CovertDirection d) {
  const auto ctx = s.context();
  const double lowest = minimum_constrained_bound(*ctx, d).value;
  ProblemSpec free = s.with_budget(d, std::numeric_limits<double>::infinity()).problem();
  free.ctx = ctx;
  const SolveResult r = solve(free);
  return 0.5 * (lowest + bound_for(*ctx, d, r.p_opt));
}

std::vector<BenchRow> run_bench(const Scenario& s, int runs, int warmup) {
  if (runs < 1) throw ConfigError("key 'bench.runs' must be at least 1");
  if (warmup < 0) throw ConfigError("key 'bench.warmup' must be nonnegative");
  std::vector<BenchRow> rows;
  for (Objective obj : {Objective::exact, Objective::upper_bound, Objective::lower_bound}) {
    for (CovertDirection d : {CovertDirection::h0_h1, CovertDirection::h1_h0}) {
      Scenario inst = s;
      inst.objective = obj;
      const double budget = s.covert.active() ? s.covert.budget : active_budget(inst, d);
      inst = inst.with_budget(d, budget);
      ProblemSpec spec = inst.problem();
      BenchRow row{obj, d, budget, 0.0, runs, "", 0.0};
      for (int w = 0; w < warmup; ++w) solve(spec);
      std::vector<double> times;
      SolveResult last;
      for (int i = 0; i < runs; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        last = solve(spec);
        times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      }
      std::sort(times.begin(), times.end());
      row.median_seconds = times.size() % 2 ? times[times.size() / 2]
                                            : 0.5 * (times[times.size() / 2 - 1] + times[times.size() / 2]);
      row.status = to_string(last.status);
      row.rate = last.objective_value;
      rows.push_back(row);
    }
  }
  return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "# cshape bench v1\n";
  os << "objective,direction,budget,median_seconds,runs,status,rate\n";
  for (const BenchRow& r : rows)
    os << to_string(r.objective) << ',' << to_string(r.direction) << ',' << fmt_num(r.budget) << ','
       << fmt_num(r.median_seconds) << ',' << r.runs << ',' << r.status << ',' << fmt_num(r.rate) << '\n';
}

// warden ---------------------------------------------------------------------------

WardenOutput run_warden(const Scenario& s, const Eigen::VectorXd& p, TvMethod method, std::int64_t samples,
                        std::uint64_t seed) {
  const auto ctx = s.context();
  WardenOutput w;
  w.report = detection_error_opt(HypothesisModel::from_context(*ctx, p), method, samples, seed);
  w.kl_h0_h1 = kl_h0_h1_exact(*ctx, p);
  w.kl_h1_h0 = kl_h1_h0_exact(*ctx, p);
  const double d = std::max(0.0, std::min(w.kl_h0_h1, w.kl_h1_h0));
  w.pinsker_floor = 1.0 - std::sqrt(d / 2.0);
  w.pinsker_ok = w.report.xi_opt >= w.pinsker_floor - 3.0 * w.report.mc_stderr;
  if (s.covert.active()) w.covert_ok = w.report.xi_opt >= 1.0 - s.covert.epsilon() - 3.0 * w.report.mc_stderr;
  return w;
}

nlohmann::json warden_json(const Scenario& s, const WardenOutput& w) {
  return {{"scenario", scenario_json(s)},
          {"report", w.report},
          {"kl_h0_h1_exact", num(w.kl_h0_h1)},
          {"kl_h1_h0_exact", num(w.kl_h1_h0)},
          {"pinsker_floor", num(w.pinsker_floor)},
          {"pinsker_ok", w.pinsker_ok},
          {"covert_ok", w.covert_ok}};
}

std::string pinsker_line(const WardenOutput& w) {
  std::ostringstream os;
  os << "pinsker: xi_opt=" << fmt_num(w.report.xi_opt) << " floor=" << fmt_num(w.pinsker_floor)
     << " stderr=" << fmt_num(w.report.mc_stderr) << ' ' << (w.pinsker_ok ? "PASS" : "FAIL");
  return os.str();
}

// eval -----------------------------------------------------------------------------

nlohmann::json eval_json(const Scenario& s, const Eigen::VectorXd& p) {
  const auto ctx = s.context();
  return {{"scenario", scenario_json(s)}, {"evaluation", evaluate_design(*ctx, s.covert, p)}};
}

}  // namespace cshape
