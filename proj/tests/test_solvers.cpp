#include <doctest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

#include "cshape/channel.hpp"
#include "cshape/error.hpp"
#include "cshape/solvers.hpp"
#include "oracles.hpp"

using namespace cshape;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::shared_ptr<const MetricContext> context(std::vector<cplx> pts, double cap, cplx gb, cplx gw, double sb2,
                                             double sw2 = 1.0) {
  return std::make_shared<const MetricContext>(ConstellationSet(std::move(pts)), cap, ChannelRealization{gb, gw},
                                               NoiseModel(sb2, sw2));
}

std::shared_ptr<const MetricContext> qam_context(int K, double snr_db, std::uint64_t seed) {
  return std::make_shared<const MetricContext>(make_qam(K), 10.0, sample_rayleigh({}, seed),
                                               NoiseModel(sigma_b_from_snr(10.0, snr_db), 1.0));
}

ProblemSpec spec_of(std::shared_ptr<const MetricContext> ctx, Objective o, CovertDirection d, double budget) {
  ProblemSpec s;
  s.ctx = std::move(ctx);
  s.objective = o;
  s.covert = {d, budget};
  return s;
}

double rate_of(const MetricContext& ctx, Objective o, const Eigen::VectorXd& p) {
  switch (o) {
    case Objective::exact: return rate_exact(ctx, p);
    case Objective::upper_bound: return rate_upper(ctx, p);
    case Objective::lower_bound: return rate_lower(ctx, p);
  }
  return 0.0;
}

double bound_of(const MetricContext& ctx, CovertDirection d, const Eigen::VectorXd& p) {
  return d == CovertDirection::h0_h1 ? kl_h0_h1_upper(ctx, p) : kl_h1_h0_upper(ctx, p);
}

// Best feasible rate by exhaustive search over the K = 2 or 3 simplex.
oracle::GridBest grid_optimum(const ProblemSpec& s) {
  const MetricContext& ctx = *s.ctx;
  Eigen::VectorXd w(static_cast<Eigen::Index>(ctx.size()));
  for (std::size_t k = 0; k < ctx.size(); ++k) w[static_cast<Eigen::Index>(k)] = std::norm(ctx.set().points()[k]);
  std::vector<std::function<double(const Eigen::VectorXd&)>> g = {
      [&](const Eigen::VectorXd& p) { return w.dot(p) - ctx.power_cap(); }};
  if (s.covert.active())
    g.push_back([&](const Eigen::VectorXd& p) { return bound_of(ctx, s.covert.direction, p) - s.covert.budget; });
  return oracle::constrained_simplex_min(static_cast<int>(ctx.size()), g,
                                         [&](const Eigen::VectorXd& p) { return -rate_of(ctx, s.objective, p); });
}

// Halfway between the smallest reachable bound and the bound at the
// unconstrained optimum: the constraint is feasible and binds.
double binding_budget(std::shared_ptr<const MetricContext> ctx, Objective o, CovertDirection d) {
  const SolveResult free = solve(spec_of(ctx, o, d, kInf));
  const double lo = minimum_constrained_bound(*ctx, d).value;
  return 0.5 * (lo + bound_of(*ctx, d, free.p_opt));
}

void check_orbit_constant(const ConstellationSet& set, const Eigen::VectorXd& p, double tol) {
  for (const auto& orbit : symmetry_orbits(set))
    for (std::size_t i : orbit) CHECK(std::abs(p[static_cast<Eigen::Index>(i)] - p[static_cast<Eigen::Index>(orbit[0])]) < tol);
}

}  // namespace

TEST_CASE("loose budget on an antipodal pair matches the grid") {
  const auto ctx = context({-1.0, 1.0}, 10.0, 0.8, 0.6, 0.5);
  for (Objective o : {Objective::exact, Objective::upper_bound, Objective::lower_bound}) {
    CAPTURE(to_string(o));
    const ProblemSpec s = spec_of(ctx, o, CovertDirection::h0_h1, 10.0);
    const SolveResult r = solve(s);
    const auto g = grid_optimum(s);
    CHECK(r.status == SolveStatus::converged);
    CHECK(std::abs(r.p_opt[0] - g.p[0]) < 1e-3);
    CHECK(std::abs(r.objective_value + g.value) < 1e-4);
  }
}

TEST_CASE("small asymmetric instances match the grid, loose and binding budgets") {
  struct Case {
    std::vector<cplx> pts;
    double cap;
  };
  const std::vector<Case> cases = {
      {{0.0, 2.0}, 2.0},
      {{-1.0, 2.0}, 10.0},
      {{0.0, 1.0, cplx(0.0, 3.0)}, 3.0},
      {{-1.0, cplx(0.5, 1.0), 2.0}, 10.0},
  };
  for (const Case& c : cases) {
    const auto ctx = context(c.pts, c.cap, cplx(0.9, 0.3), cplx(0.5, -0.4), 0.4);
    for (Objective o : {Objective::exact, Objective::upper_bound, Objective::lower_bound})
      for (CovertDirection d : {CovertDirection::h0_h1, CovertDirection::h1_h0})
        for (bool tight : {false, true}) {
          const double budget = tight ? binding_budget(ctx, o, d) : kInf;
          CAPTURE(c.pts.size());
          CAPTURE(c.cap);
          CAPTURE(to_string(o));
          CAPTURE(to_string(d));
          CAPTURE(budget);
          const ProblemSpec s = spec_of(ctx, o, d, budget);
          const SolveResult r = solve(s);
          const auto g = grid_optimum(s);
          REQUIRE(g.p.size() > 0);
          CHECK(r.status == SolveStatus::converged);
          CHECK((r.p_opt - g.p).cwiseAbs().maxCoeff() < 1e-3);
          CHECK(std::abs(r.objective_value + g.value) < 1e-4);
        }
  }
}

TEST_CASE("optimum of 16-QAM is constant on orbits") {
  const auto ctx = qam_context(16, 12.0, 62);
  for (Objective o : {Objective::exact, Objective::upper_bound, Objective::lower_bound}) {
    CAPTURE(to_string(o));
    check_orbit_constant(ctx->set(), solve(spec_of(ctx, o, CovertDirection::h0_h1, 0.02)).p_opt, 1e-3);
    check_orbit_constant(ctx->set(), solve(spec_of(ctx, o, CovertDirection::h0_h1, kInf)).p_opt, 1e-3);
    // this channel leaves almost no room between the smallest reachable
    // D_U(p1||p0) and its unconstrained value, so use one that does
    const auto wide = qam_context(16, 12.0, 7);
    const double b = binding_budget(wide, o, CovertDirection::h1_h0);
    const SolveResult r = solve(spec_of(wide, o, CovertDirection::h1_h0, b));
    CHECK(r.status == SolveStatus::converged);
    check_orbit_constant(wide->set(), r.p_opt, 1e-3);
  }
}

TEST_CASE("returned designs respect the budget") {
  const auto ctx = qam_context(16, 12.0, 62);
  for (Objective o : {Objective::exact, Objective::upper_bound, Objective::lower_bound}) {
    const SolveResult r = solve(spec_of(ctx, o, CovertDirection::h0_h1, 0.02));
    REQUIRE(r.status == SolveStatus::converged);
    CHECK(kl_h0_h1_upper(*ctx, r.p_opt) <= 0.02 + 1e-6);
    CHECK(r.constrained_bound == doctest::Approx(kl_h0_h1_upper(*ctx, r.p_opt)).epsilon(1e-12));
    CHECK(r.bound_audit_passed);
  }
}

TEST_CASE("converged results satisfy every constraint") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 12; ++trial) {
    const int K = trial % 2 ? 4 : 8;
    const auto ctx = qam_context(K, 4.0 + 8.0 * u(rng), 100 + trial);
    const Objective o = static_cast<Objective>(trial % 3);
    const CovertDirection d = trial % 4 < 2 ? CovertDirection::h0_h1 : CovertDirection::h1_h0;
    const ProblemSpec s = spec_of(ctx, o, d, binding_budget(ctx, o, d));
    const SolveResult r = solve(s);
    CAPTURE(trial);
    if (r.status != SolveStatus::converged) continue;
    CHECK(std::abs(r.p_opt.sum() - 1.0) < 1e-6);
    CHECK(r.p_opt.minCoeff() >= -1e-6);
    Eigen::VectorXd w(K);
    for (int k = 0; k < K; ++k) w[k] = std::norm(ctx->set().points()[static_cast<std::size_t>(k)]);
    CHECK(w.dot(r.p_opt) <= ctx->power_cap() + 1e-6);
    CHECK(bound_of(*ctx, d, r.p_opt) <= s.covert.budget + 1e-6);
  }
}

TEST_CASE("frank-wolfe gap") {
  const auto ctx = qam_context(16, 12.0, 7);
  for (Objective o : {Objective::upper_bound, Objective::lower_bound})
    for (CovertDirection d : {CovertDirection::h0_h1, CovertDirection::h1_h0}) {
      const SolveResult r = solve_frank_wolfe(spec_of(ctx, o, d, binding_budget(ctx, o, d)));
      REQUIRE(r.trace.size() > 1);
      double running = kInf;
      for (const TraceEntry& e : r.trace) {
        CHECK(e.gap >= -1e-12);
        running = std::min(running, e.gap);
      }
      if (r.status == SolveStatus::converged) CHECK(r.trace.back().gap <= SolverConfig{}.delta);
      CHECK(running <= r.trace.front().gap);
    }
}

TEST_CASE("bound objectives bracket the exact rate at their optima") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto ctx = qam_context(4, 8.0, seed);
    const SolveResult lo = solve(spec_of(ctx, Objective::lower_bound, CovertDirection::h0_h1, kInf));
    const SolveResult up = solve(spec_of(ctx, Objective::upper_bound, CovertDirection::h0_h1, kInf));
    CHECK(lo.objective_value <= rate_exact(*ctx, lo.p_opt));
    CHECK(rate_exact(*ctx, up.p_opt) <= up.objective_value + 1e-4);
  }
  const auto pair = context({-1.0, 1.0}, 10.0, 0.8, 0.6, 0.5);
  const SolveResult lo = solve(spec_of(pair, Objective::lower_bound, CovertDirection::h0_h1, kInf));
  const SolveResult up = solve(spec_of(pair, Objective::upper_bound, CovertDirection::h0_h1, kInf));
  CHECK(lo.objective_value <= rate_exact(*pair, lo.p_opt));
  CHECK(rate_exact(*pair, up.p_opt) <= up.objective_value + 1e-4);
}

TEST_CASE("gradient projection decreases the objective within each outer pass") {
  const auto ctx = qam_context(16, 12.0, 7);
  for (CovertDirection d : {CovertDirection::h0_h1, CovertDirection::h1_h0}) {
    const double b = binding_budget(ctx, Objective::exact, d);
    const SolveResult r = solve_exact_gdproj(spec_of(ctx, Objective::exact, d, b));
    REQUIRE(r.trace.size() > 1);
    for (std::size_t i = 1; i < r.trace.size(); ++i)
      if (r.trace[i].outer == r.trace[i - 1].outer) CHECK(r.trace[i].objective <= r.trace[i - 1].objective + 1e-8);
  }
}

TEST_CASE("solves are bit-for-bit repeatable") {
  const auto ctx = qam_context(8, 10.0, 7);
  for (Objective o : {Objective::exact, Objective::upper_bound}) {
    const double b = binding_budget(ctx, o, CovertDirection::h1_h0);
    const ProblemSpec s = spec_of(ctx, o, CovertDirection::h1_h0, b);
    const SolveResult a = solve(s), c = solve(s);
    CHECK(a.p_opt == c.p_opt);
    REQUIRE(a.trace.size() == c.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
      CHECK(a.trace[i].objective == c.trace[i].objective);
      CHECK(a.trace[i].step == c.trace[i].step);
      CHECK(a.trace[i].slack == c.trace[i].slack);
    }
  }
}

TEST_CASE("exact and upper-bound designs give similar exact rates") {
  const auto ctx = qam_context(8, 10.0, 3);
  const SolveResult ex = solve(spec_of(ctx, Objective::exact, CovertDirection::h0_h1, kInf));
  const SolveResult up = solve(spec_of(ctx, Objective::upper_bound, CovertDirection::h0_h1, kInf));
  CHECK(std::abs(rate_exact(*ctx, ex.p_opt) - rate_exact(*ctx, up.p_opt)) <= 0.05);
  CHECK(rate_exact(*ctx, ex.p_opt) >= rate_exact(*ctx, up.p_opt) - 1e-6);
}

TEST_CASE("infeasible budgets are reported") {
  const auto ctx = qam_context(4, 10.0, 3);
  for (Objective o : {Objective::exact, Objective::upper_bound, Objective::lower_bound}) {
    const SolveResult r = solve(spec_of(ctx, o, CovertDirection::h0_h1, 0.0));
    CHECK(r.status == SolveStatus::infeasible);
    CHECK(r.violated_constraint == "covert");
    CHECK(r.p_opt.size() == 0);
    const SolveResult q = solve(spec_of(ctx, o, CovertDirection::h1_h0, 0.02));
    CHECK(q.status == SolveStatus::infeasible);
    CHECK(q.violated_constraint == "covert");
  }
  CHECK(minimum_constrained_bound(*ctx, CovertDirection::h1_h0).value > 0.02);
}

TEST_CASE("design comparison") {
  const auto ctx = qam_context(8, 10.0, 62);
  const DesignComparison loose = compare_designs(spec_of(ctx, Objective::exact, CovertDirection::h0_h1, 1e6));
  CHECK(loose.optimized.status == SolveStatus::converged);
  CHECK(loose.optimized_eval.rate_exact >= loose.equiprobable.rate_exact - 1e-6);
  CHECK_FALSE(loose.equiprobable_violates);
  CHECK(loose.equiprobable.p == equiprobable(8).vector());

  const DesignComparison zero = compare_designs(spec_of(ctx, Objective::exact, CovertDirection::h0_h1, 0.0));
  CHECK(zero.optimized.status == SolveStatus::infeasible);
  CHECK(zero.equiprobable_violates);

  const DesignComparison tight = compare_designs(spec_of(ctx, Objective::exact, CovertDirection::h0_h1, 0.02));
  CHECK(tight.optimized_eval.constrained_bound <= 0.02 + 1e-6);
  CHECK(tight.equiprobable.constrained_bound == doctest::Approx(kl_h0_h1_upper(*ctx, equiprobable(8).vector())));
  CHECK(tight.equiprobable_violates == (tight.equiprobable.constrained_bound > 0.02 ||
                                        tight.equiprobable.exact_divergence > 0.02));
}

TEST_CASE("random start is seeded") {
  const auto ctx = qam_context(8, 10.0, 62);
  ProblemSpec s = spec_of(ctx, Objective::upper_bound, CovertDirection::h0_h1, 0.02);
  s.solver.random_start_seed = 9;
  const SolveResult a = solve(s), b = solve(s);
  CHECK(a.p_opt == b.p_opt);
  CHECK(a.status == SolveStatus::converged);
  const SolveResult ref = solve(spec_of(ctx, Objective::upper_bound, CovertDirection::h0_h1, 0.02));
  CHECK((a.p_opt - ref.p_opt).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("result serialization") {
  const auto ctx = qam_context(4, 10.0, 62);
  const SolveResult r = solve(spec_of(ctx, Objective::exact, CovertDirection::h0_h1, 0.02));
  nlohmann::json j = r;
  CHECK(j.at("status") == "converged");
  CHECK(j.at("p_opt").size() == 4);
  CHECK(j.at("p_opt")[1].get<double>() == r.p_opt[1]);
  CHECK(j.at("objective_value").get<double>() == r.objective_value);
  std::ostringstream os;
  write_trace_csv(os, r);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "outer,iter,objective,step,slack,gap");
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == r.trace.size());
}

TEST_CASE("epsilon and budget") {
  const CovertnessSpec c = CovertnessSpec::from_epsilon(CovertDirection::h1_h0, 0.1);
  CHECK(c.budget == doctest::Approx(0.02));
  CHECK(c.epsilon() == doctest::Approx(0.1));
  CHECK_THROWS_AS(CovertnessSpec::from_epsilon(CovertDirection::h0_h1, 1.5), Error);
  CHECK_THROWS_AS((CovertnessSpec{CovertDirection::h0_h1, -1.0}.validate()), Error);
  CHECK(parse_objective("upper") == Objective::upper_bound);
  CHECK_THROWS_AS(parse_direction("h2"), Error);
}
