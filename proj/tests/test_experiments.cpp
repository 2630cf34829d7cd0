#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "cshape/experiments.hpp"

using namespace cshape;
namespace fs = std::filesystem;

namespace {

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

Config cfg_of(const std::string& text) { return Config::from_string(text, "test.ini"); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cshape_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Run {
  int code;
  std::string out, err;
};

Run cli(const std::string& args, const TempDir& tmp) {
  const fs::path out = tmp.path / "stdout.txt", err = tmp.path / "stderr.txt";
  const std::string cmd = std::string(CSHAPE_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string config_path(const std::string& name) { return std::string(CSHAPE_CONFIG_DIR) + "/" + name; }

}  // namespace

TEST_CASE("config sections, comments and types") {
  const Config c = cfg_of(
      "# header\n"
      "[scenario]\n"
      "order = 16   ; inline comment\n"
      "snr_db = 12.5 # another\n"
      "[solver]\n"
      "single_shot_sca = true\n"
      "[sweep]\n"
      "snr_db = 0, 2,4 , 6\n"
      "directions = h0_h1, h1_h0\n");
  CHECK(c.get_int("scenario.order", 0) == 16);
  CHECK(c.get_double("scenario.snr_db", 0.0) == 12.5);
  CHECK(c.get_bool("solver.single_shot_sca", false));
  CHECK(c.get_list("sweep.snr_db") == std::vector<double>{0, 2, 4, 6});
  CHECK(c.get_string_list("sweep.directions") == std::vector<std::string>{"h0_h1", "h1_h0"});
  CHECK(c.get_double("scenario.power_cap", 10.0) == 10.0);
  CHECK(c.get_list("sweep.orders").empty());
  CHECK_FALSE(c.has("covert.budget"));
}

TEST_CASE("config errors say where and what") {
  CHECK(message_of([] { cfg_of("[scenario]\norder = 4\n[bogus]\nx = 1\n"); }).find("[bogus]") != std::string::npos);
  CHECK(message_of([] { cfg_of("[scenario]\nordr = 4\n"); }).find("scenario.ordr") != std::string::npos);
  CHECK(message_of([] { cfg_of("[scenario]\norder = 4\nthis line is broken\n"); }).find("test.ini:3") !=
        std::string::npos);
  CHECK(message_of([] { cfg_of("[scenario]\norder = four\n").get_int("scenario.order", 0); })
            .find("scenario.order") != std::string::npos);
  CHECK(message_of([] { cfg_of("[sweep]\nsnr_db =\n").get_list("sweep.snr_db"); }).find("empty list") !=
        std::string::npos);
  CHECK(message_of([] { cfg_of("[solver]\nsingle_shot_sca = maybe\n").get_bool("solver.single_shot_sca", false); })
            .find("true or false") != std::string::npos);
  CHECK_THROWS_AS(Config::from_file("/nonexistent/x.ini"), ConfigError);
}

TEST_CASE("overrides replace file values") {
  Config c = cfg_of("[scenario]\norder = 4\nsnr_db = 3\n");
  c.apply_override("scenario.snr_db=9");
  c.apply_override("covert.epsilon = 0.2");
  CHECK(c.get_double("scenario.snr_db", 0.0) == 9.0);
  CHECK(c.get_double("covert.epsilon", 0.0) == 0.2);
  CHECK_THROWS_AS(c.apply_override("scenario.snr_db"), ConfigError);
  CHECK_THROWS_AS(c.apply_override("scenario.nope=1"), ConfigError);
  CHECK_THROWS_AS(c.apply_override("snr_db=1"), ConfigError);
}

TEST_CASE("scenario loading") {
  const Scenario s = load_scenario(cfg_of(
      "[scenario]\norder = 16\nsnr_db = 12\nchannel_seed = 62\n[covert]\ndirection = h1_h0\nepsilon = 0.5\n"
      "[solver]\nobjective = upper_bound\nmax_iters = 100\n[quadrature]\norder = 12\n"));
  CHECK(s.set.size() == 16);
  CHECK(s.sigma_b_sq == doctest::Approx(10.0 * std::pow(10.0, -1.2)));
  CHECK(s.covert.direction == CovertDirection::h1_h0);
  CHECK(s.covert.budget == doctest::Approx(0.5));
  CHECK(s.objective == Objective::upper_bound);
  CHECK(s.solver.max_iters == 100);
  CHECK(s.quad.order == 12);
  CHECK(s.channel().g_b == sample_rayleigh({}, 62).g_b);

  const Scenario p = load_scenario(cfg_of(
      "[scenario]\nconstellation = points\npoints = -1,0 1,0 0,2\nsigma_b_sq = 0.5\ng_b = 0.9,0\ng_w = 0.1,0.2\n"));
  CHECK(p.set.size() == 3);
  CHECK(p.set.points()[2] == cplx(0.0, 2.0));
  CHECK(p.sigma_b_sq == 0.5);
  CHECK(p.channel().g_w == cplx(0.1, 0.2));
  CHECK_FALSE(p.covert.active());
}

TEST_CASE("scenario errors name the key") {
  CHECK(message_of([] { load_scenario(cfg_of("[scenario]\nsnr_db = 3\n")); }).find("'scenario.order'") !=
        std::string::npos);
  CHECK(message_of([] { load_scenario(cfg_of("[scenario]\norder = 4\n")); }).find("'scenario.snr_db'") !=
        std::string::npos);
  CHECK(message_of([] {
          load_scenario(cfg_of("[scenario]\norder = 4\nsnr_db = 1\n[covert]\nepsilon = 0.1\nbudget = 0.1\n"));
        }).find("not both") != std::string::npos);
  CHECK(message_of([] {
          load_scenario(cfg_of("[scenario]\norder = 4\nsnr_db = 1\n[solver]\nobjective = median\n"));
        }).find("median") != std::string::npos);
  CHECK_THROWS_AS(load_scenario(cfg_of("[scenario]\norder = 6\nsnr_db = 1\n")), ConfigError);
  CHECK_THROWS_AS(load_scenario(cfg_of("[scenario]\norder = 4\nsnr_db = 1\ng_b = 1,0\n")), ConfigError);
  CHECK_THROWS_AS(load_scenario(cfg_of("[scenario]\norder = 4\nsnr_db = 1\n[covert]\nepsilon = 2\n")), ConfigError);
}

TEST_CASE("probability input") {
  CHECK(parse_probability_list("0.5, 0.25,0.25", 3) == Eigen::Vector3d(0.5, 0.25, 0.25));
  CHECK_THROWS_AS(parse_probability_list("0.5, 0.5", 3), Error);
  CHECK_THROWS_AS(parse_probability_list("0.5, 0.6, -0.1", 3), Error);
  TempDir tmp;
  const fs::path f = tmp.path / "p.json";
  std::ofstream(f) << R"({"result": {"p_opt": [0.1, 0.2, 0.3, 0.4]}})";
  CHECK(read_probability_file(f.string(), 4) == Eigen::Vector4d(0.1, 0.2, 0.3, 0.4));
  std::ofstream(f) << "[0.5, 0.5]";
  CHECK(read_probability_file(f.string(), 2) == Eigen::Vector2d(0.5, 0.5));
  std::ofstream(f) << "{not json";
  CHECK_THROWS_AS(read_probability_file(f.string(), 2), Error);
}

TEST_CASE("optimize on 16-QAM") {
  const OptimizeOutput o = run_optimize(load_scenario(Config::from_file(config_path("optimize_k16.ini"))));
  REQUIRE(o.result.status == SolveStatus::converged);
  for (const auto& orbit : symmetry_orbits(o.scenario.set))
    for (std::size_t i : orbit)
      CHECK(std::abs(o.result.p_opt[static_cast<Eigen::Index>(i)] - o.result.p_opt[static_cast<Eigen::Index>(orbit[0])]) <
            1e-3);
  const std::string line = optimize_summary(o);
  CHECK(line.find("status=converged") != std::string::npos);
  CHECK(line.find("budget_satisfied=yes") != std::string::npos);
  const nlohmann::json j = optimize_json(o);
  CHECK(j.at("result").at("p_opt").size() == 16);
  CHECK(j.at("scenario").at("k") == 16);
}

TEST_CASE("sweep plan") {
  const Scenario s = load_scenario(cfg_of("[scenario]\norder = 4\nsnr_db = 3\n[covert]\nbudget = 0.1\n"));
  CHECK_THROWS_AS(load_sweep_plan(cfg_of("[scenario]\norder = 4\n"), s), ConfigError);
  CHECK_THROWS_AS(load_sweep_plan(cfg_of("[sweep]\nsnr_db =\n"), s), ConfigError);
  CHECK_THROWS_AS(load_sweep_plan(cfg_of("[sweep]\nepsilon = 0.1\nbudget = 0.1\n"), s), ConfigError);
  const SweepPlan p = load_sweep_plan(cfg_of("[sweep]\nepsilon = 0.1, 0.5\n"), s);
  CHECK(p.orders == std::vector<int>{4});
  CHECK(p.snr_db == std::vector<double>{3.0});
  CHECK(p.budgets.size() == 2);
  CHECK(p.budgets[1] == doctest::Approx(0.5));
}

TEST_CASE("sweep rows, order and determinism") {
  const Scenario s = load_scenario(cfg_of("[scenario]\norder = 4\nsnr_db = 3\nchannel_seed = 62\n[covert]\nbudget = 0.1\n"));
  SweepPlan plan;
  plan.orders = {2, 4};
  plan.directions = {CovertDirection::h0_h1, CovertDirection::h1_h0};
  plan.snr_db = {0.0, 6.0};
  plan.budgets = {0.1, 2.0};
  const auto a = run_sweep(s, plan, 1), b = run_sweep(s, plan, 3);
  REQUIRE(a.size() == 16);
  CHECK(a[0].k == 2);
  CHECK(a[15].k == 4);
  CHECK(a[1].budget == 2.0);
  CHECK(a[2].snr_db == 6.0);
  CHECK(a[4].direction == CovertDirection::h1_h0);
  CHECK(a[4].status == "infeasible");
  std::ostringstream x, y;
  write_sweep_csv(x, a);
  write_sweep_csv(y, b);
  CHECK(x.str() == y.str());
  std::istringstream in(x.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "# cshape sweep v1");
  std::getline(in, line);
  CHECK(line.rfind("k,direction,snr_db,epsilon,budget,", 0) == 0);
}

TEST_CASE("rate grows with snr and with epsilon") {
  const Scenario s = load_scenario(Config::from_file(config_path("sweep_snr.ini")));
  SweepPlan plan;
  plan.orders = {4, 8};
  plan.directions = {CovertDirection::h0_h1};
  for (int db = 0; db <= 14; db += 2) plan.snr_db.push_back(db);
  plan.budgets = {0.1};
  const auto rows = run_sweep(s, plan, 1);
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].k == rows[i - 1].k && rows[i].status == "converged" && rows[i - 1].status == "converged")
      CHECK(rows[i].rate >= rows[i - 1].rate - 1e-6);

  SweepPlan eps;
  eps.orders = {8};
  eps.directions = {CovertDirection::h0_h1, CovertDirection::h1_h0};
  eps.snr_db = {6.0};
  for (int i = 1; i <= 10; ++i) eps.budgets.push_back(2.0 * 0.01 * i * i);
  const auto er = run_sweep(s, eps, 1);
  for (std::size_t i = 1; i < er.size(); ++i)
    if (er[i].direction == er[i - 1].direction && er[i].status == "converged" && er[i - 1].status == "converged")
      CHECK(er[i].rate >= er[i - 1].rate - 1e-6);
}

TEST_CASE("bench table") {
  const Scenario s = load_scenario(cfg_of("[scenario]\norder = 4\nsnr_db = 10\nchannel_seed = 3\n"));
  const auto rows = run_bench(s, 1, 0);
  REQUIRE(rows.size() == 6);
  for (const BenchRow& r : rows) {
    CHECK(r.median_seconds > 0.0);
    CHECK(r.runs == 1);
    CHECK(std::isfinite(r.budget));
  }
  std::ostringstream os;
  write_bench_csv(os, rows);
  CHECK(os.str().rfind("# cshape bench v1\nobjective,direction,budget,median_seconds,runs,status,rate\n", 0) == 0);
}

TEST_CASE("warden report") {
  const Scenario silent =
      load_scenario(cfg_of("[scenario]\norder = 4\nsnr_db = 10\ng_b = 1,0\ng_w = 0,0\n[covert]\nepsilon = 0.1\n"));
  const WardenOutput w = run_warden(silent, equiprobable(4).vector(), TvMethod::quadrature, 10000, 1);
  CHECK(w.report.xi_opt == 1.0);
  CHECK(w.pinsker_ok);
  CHECK(w.covert_ok);
  CHECK(pinsker_line(w).find("PASS") != std::string::npos);
  const nlohmann::json j = warden_json(silent, w);
  const DetectionReport back = j.at("report").get<DetectionReport>();
  CHECK(nlohmann::json(back) == j.at("report"));

  const Scenario k16 = load_scenario(Config::from_file(config_path("optimize_k16.ini")));
  const OptimizeOutput o = run_optimize(k16);
  const WardenOutput v = run_warden(k16, o.result.p_opt, TvMethod::monte_carlo, 100000, 2);
  CHECK(v.report.xi_opt >= 1.0 - 0.1 - 3.0 * v.report.mc_stderr);
  CHECK(v.covert_ok);
}

TEST_CASE("eval output") {
  const Scenario s = load_scenario(Config::from_file(config_path("eval.ini")));
  const nlohmann::json j = eval_json(s, equiprobable(4).vector());
  const auto& e = j.at("evaluation");
  CHECK(e.at("rate_lower").get<double>() <= e.at("rate_exact").get<double>());
  CHECK(e.at("rate_exact").get<double>() <= e.at("rate_upper").get<double>() + 1e-4);
}

TEST_CASE("command line exit codes and outputs") {
  TempDir tmp;
  SUBCASE("usage") {
    CHECK(cli("", tmp).code == 1);
    CHECK(cli("frobnicate", tmp).code == 1);
    CHECK(cli("optimize", tmp).code == 1);
    CHECK(cli("optimize -c /nonexistent.ini", tmp).code == 1);
  }
  SUBCASE("missing key") {
    const fs::path f = tmp.path / "bad.ini";
    std::ofstream(f) << "[scenario]\nsnr_db = 3\n";
    const Run r = cli("optimize -c " + f.string(), tmp);
    CHECK(r.code == 1);
    CHECK(r.err.find("scenario.order") != std::string::npos);
  }
  SUBCASE("infeasible") {
    const Run r = cli("optimize -c " + config_path("optimize_k16.ini") + " --set covert.budget=0", tmp);
    CHECK(r.code == 2);
    CHECK(r.err.find("infeasible") != std::string::npos);
  }
  SUBCASE("optimize twice gives identical files") {
    const std::string base = "optimize -c " + config_path("optimize_k16.ini") + " -o ";
    const Run a = cli(base + (tmp.path / "a").string(), tmp);
    const Run b = cli(base + (tmp.path / "b").string(), tmp);
    CHECK(a.code == 0);
    CHECK(b.code == 0);
    CHECK(a.out.find("budget_satisfied=yes") != std::string::npos);
    CHECK(slurp(tmp.path / "a" / "result.json") == slurp(tmp.path / "b" / "result.json"));
    CHECK(slurp(tmp.path / "a" / "trace.csv") == slurp(tmp.path / "b" / "trace.csv"));
    CHECK_FALSE(slurp(tmp.path / "a" / "result.json").empty());
  }
  SUBCASE("warden reads an optimize result") {
    const std::string dir = (tmp.path / "w").string();
    REQUIRE(cli("optimize -c " + config_path("optimize_k16.ini") + " -o " + dir, tmp).code == 0);
    const Run r = cli("warden -c " + config_path("optimize_k16.ini") + " --p-file " + dir + "/result.json" +
                          " --samples 20000 -o " + dir,
                      tmp);
    CHECK(r.code == 0);
    CHECK(r.err.find("pinsker:") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(fs::path(dir) / "warden.json"));
    CHECK(j.at("report").at("samples") == 20000);
    const fs::path junk = tmp.path / "junk.json";
    std::ofstream(junk) << "[0.1,";
    CHECK(cli("warden -c " + config_path("optimize_k16.ini") + " --p-file " + junk.string(), tmp).code == 1);
  }
  SUBCASE("cdf with threads is deterministic") {
    const std::string base = "cdf -c " + config_path("cdf.ini") + " -n 6 --seed 4 -o ";
    REQUIRE(cli(base + (tmp.path / "c1").string() + " -j 1", tmp).code == 0);
    REQUIRE(cli(base + (tmp.path / "c2").string() + " -j 3", tmp).code == 0);
    CHECK(slurp(tmp.path / "c1" / "cdf_curves.csv") == slurp(tmp.path / "c2" / "cdf_curves.csv"));
    CHECK(slurp(tmp.path / "c1" / "cdf_realizations.csv") == slurp(tmp.path / "c2" / "cdf_realizations.csv"));
  }
  SUBCASE("eval to stdout") {
    const Run r = cli("eval -c " + config_path("eval.ini"), tmp);
    CHECK(r.code == 0);
    CHECK(nlohmann::json::parse(r.out).contains("evaluation"));
  }
}
