// Command-line front end. Exit codes: 0 ok, 1 usage or config error,
// 2 infeasible problem, 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cshape/experiments.hpp"

namespace fs = std::filesystem;
using namespace cshape;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitNumerical = 3;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  int threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "INI config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", c.overrides, "Override a key, e.g. --set scenario.snr_db=6");
  cmd->add_option("-o,--out", c.out, "Output directory (default: stdout)");
  cmd->add_option("-j,--threads", c.threads, "Worker threads (default: $CSHAPE_THREADS or all cores)");
}

int default_threads() {
  if (const char* env = std::getenv("CSHAPE_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("CSHAPE_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Config load(const Common& c) {
  Config cfg = Config::from_file(c.config);
  for (const std::string& o : c.overrides) cfg.apply_override(o);
  return cfg;
}

int threads_of(const Common& c) { return c.threads > 0 ? c.threads : default_threads(); }

// Writes to <out>/<name>, or to stdout when no directory was given.
template <typename Fn>
void emit(const Common& c, const std::string& name, Fn&& write) {
  if (c.out.empty()) {
    write(std::cout);
    return;
  }
  fs::create_directories(c.out);
  const fs::path path = fs::path(c.out) / name;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  write(f);
}

Eigen::VectorXd probabilities(const Config& cfg, const std::string& section, const std::optional<std::string>& inline_p,
                              const std::optional<std::string>& file, std::size_t K) {
  if (inline_p) return parse_probability_list(*inline_p, K);
  if (file) return read_probability_file(*file, K);
  if (cfg.has(section + ".p")) return parse_probability_list(cfg.get_string(section + ".p", ""), K);
  if (cfg.has(section + ".p_file")) return read_probability_file(cfg.get_string(section + ".p_file", ""), K);
  return equiprobable(K).vector();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic constellation shaping under a covertness budget"};
  app.require_subcommand(1);

  Common opt_c;
  auto* optimize = app.add_subcommand("optimize", "Solve one shaping problem");
  add_common(optimize, opt_c);

  Common sweep_c;
  auto* sweep = app.add_subcommand("sweep", "Solve over a grid of K, direction, SNR and budget");
  add_common(sweep, sweep_c);

  Common cdf_c;
  std::optional<int> cdf_n;
  std::optional<std::uint64_t> cdf_seed;
  auto* cdf = app.add_subcommand("cdf", "Empirical CDF of the divergence over fading draws");
  add_common(cdf, cdf_c);
  cdf->add_option("-n,--realizations", cdf_n, "Number of channel draws (default: cdf.realizations or 200)");
  cdf->add_option("--seed", cdf_seed, "Base channel seed (default: cdf.seed or 1)");

  Common bench_c;
  std::optional<int> bench_runs, bench_warmup;
  auto* bench = app.add_subcommand("bench", "Median solve time per objective and direction");
  add_common(bench, bench_c);
  bench->add_option("--runs", bench_runs, "Timed runs (default: bench.runs or 5)");
  bench->add_option("--warmup", bench_warmup, "Untimed runs (default: bench.warmup or 1)");

  Common warden_c;
  std::optional<std::string> warden_p, warden_file, warden_method;
  std::optional<long long> warden_samples;
  auto* warden = app.add_subcommand("warden", "Detection-error report for a given distribution");
  add_common(warden, warden_c);
  warden->add_option("-p,--p", warden_p, "Comma-separated probabilities");
  warden->add_option("--p-file", warden_file, "Optimize result JSON or a JSON array");
  warden->add_option("--method", warden_method, "quadrature or monte_carlo");
  warden->add_option("--samples", warden_samples, "Monte Carlo and LRT sample count");

  Common eval_c;
  std::optional<std::string> eval_p, eval_file;
  auto* eval = app.add_subcommand("eval", "Evaluate every metric at a given distribution");
  add_common(eval, eval_c);
  eval->add_option("-p,--p", eval_p, "Comma-separated probabilities (default: eval.p or equiprobable)");
  eval->add_option("--p-file", eval_file, "Optimize result JSON or a JSON array");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*optimize) {
      const Config cfg = load(opt_c);
      const OptimizeOutput o = run_optimize(load_scenario(cfg));
      std::cout << optimize_summary(o) << '\n';
      if (!opt_c.out.empty()) {
        emit(opt_c, "result.json", [&](std::ostream& os) { os << optimize_json(o).dump(2) << '\n'; });
        emit(opt_c, "trace.csv", [&](std::ostream& os) { write_trace_csv(os, o.result); });
      } else {
        std::cout << optimize_json(o).dump(2) << '\n';
      }
      if (o.result.status == SolveStatus::infeasible) {
        std::cerr << "infeasible: " << o.result.message << '\n';
        return kExitInfeasible;
      }
    } else if (*sweep) {
      const Config cfg = load(sweep_c);
      const Scenario s = load_scenario(cfg);
      const SweepPlan plan = load_sweep_plan(cfg, s);
      const auto rows = run_sweep(s, plan, threads_of(sweep_c));
      emit(sweep_c, "sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, rows); });
    } else if (*cdf) {
      const Config cfg = load(cdf_c);
      const Scenario s = load_scenario(cfg);
      const int n = cdf_n.value_or(static_cast<int>(cfg.get_int("cdf.realizations", 200)));
      const std::uint64_t seed = cdf_seed.value_or(cfg.get_u64("cdf.seed", 1));
      const DivergenceCdf res = run_cdf(s, n, seed, threads_of(cdf_c));
      emit(cdf_c, "cdf_curves.csv", [&](std::ostream& os) { write_cdf_curves_csv(os, res); });
      emit(cdf_c, "cdf_realizations.csv", [&](std::ostream& os) { write_cdf_realizations_csv(os, res); });
      std::cerr << cdf_summary(s, res) << '\n';
    } else if (*bench) {
      const Config cfg = load(bench_c);
      const Scenario s = load_scenario(cfg);
      const int runs = bench_runs.value_or(static_cast<int>(cfg.get_int("bench.runs", 5)));
      const int warm = bench_warmup.value_or(static_cast<int>(cfg.get_int("bench.warmup", 1)));
      const auto rows = run_bench(s, runs, warm);
      emit(bench_c, "bench.csv", [&](std::ostream& os) { write_bench_csv(os, rows); });
    } else if (*warden) {
      const Config cfg = load(warden_c);
      const Scenario s = load_scenario(cfg);
      const Eigen::VectorXd p = probabilities(cfg, "warden", warden_p, warden_file, s.set.size());
      const TvMethod method = parse_tv_method(warden_method.value_or(cfg.get_string("warden.method", "quadrature")));
      const std::int64_t samples = warden_samples.value_or(cfg.get_int("warden.samples", 100000));
      const WardenOutput w = run_warden(s, p, method, samples, cfg.get_u64("warden.seed", 1));
      emit(warden_c, "warden.json", [&](std::ostream& os) { os << warden_json(s, w).dump(2) << '\n'; });
      std::cerr << pinsker_line(w) << '\n';
    } else if (*eval) {
      const Config cfg = load(eval_c);
      const Scenario s = load_scenario(cfg);
      const Eigen::VectorXd p = probabilities(cfg, "eval", eval_p, eval_file, s.set.size());
      emit(eval_c, "eval.json", [&](std::ostream& os) { os << eval_json(s, p).dump(2) << '\n'; });
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible (" << e.constraint() << "): " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
