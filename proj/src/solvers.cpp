#include "cshape/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "cshape/error.hpp"
#include "cshape/format.hpp"
#include "cshape/rng.hpp"

namespace cshape {

std::string to_string(CovertDirection d) { return d == CovertDirection::h0_h1 ? "h0_h1" : "h1_h0"; }

std::string to_string(Objective o) {
  switch (o) {
    case Objective::exact: return "exact";
    case Objective::upper_bound: return "upper_bound";
    case Objective::lower_bound: return "lower_bound";
  }
  return "?";
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iters: return "max_iters";
    case SolveStatus::stalled: return "stalled";
    case SolveStatus::infeasible: return "infeasible";
  }
  return "?";
}

CovertDirection parse_direction(const std::string& s) {
  if (s == "h0_h1") return CovertDirection::h0_h1;
  if (s == "h1_h0") return CovertDirection::h1_h0;
  throw Error("unknown covert direction '" + s + "' (expected h0_h1 or h1_h0)");
}

Objective parse_objective(const std::string& s) {
  if (s == "exact") return Objective::exact;
  if (s == "upper_bound" || s == "upper") return Objective::upper_bound;
  if (s == "lower_bound" || s == "lower") return Objective::lower_bound;
  throw Error("unknown objective '" + s + "' (expected exact, upper_bound or lower_bound)");
}

CovertnessSpec CovertnessSpec::from_epsilon(CovertDirection direction, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error("epsilon must lie in [0, 1]");
  return {direction, 2.0 * epsilon * epsilon};
}

void CovertnessSpec::validate() const {
  if (std::isnan(budget) || budget < 0.0) throw Error("covertness budget must be >= 0");
}

namespace {

struct Surrogate {
  std::function<double(const Eigen::VectorXd&)> f;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad;
};

Surrogate make_surrogate(const MetricContext& ctx, Objective objective) {
  const MetricContext* c = &ctx;
  switch (objective) {
    case Objective::exact:
      return {[c](const Eigen::VectorXd& p) { return exact_objective(*c, p); },
              [c](const Eigen::VectorXd& p) { return exact_objective_gradient(*c, p); }};
    case Objective::upper_bound:
      return {[c](const Eigen::VectorXd& p) { return log_kernel_form(c->kernels().r, p); },
              [c](const Eigen::VectorXd& p) { return log_kernel_form_gradient(c->kernels().r, p); }};
    case Objective::lower_bound:
      return {[c](const Eigen::VectorXd& p) { return log_kernel_form(c->kernels().s_b, p); },
              [c](const Eigen::VectorXd& p) { return log_kernel_form_gradient(c->kernels().s_b, p); }};
  }
  throw Error("unknown objective");
}

double reported_rate(const MetricContext& ctx, Objective objective, const Eigen::VectorXd& p) {
  switch (objective) {
    case Objective::exact: return rate_exact(ctx, p);
    case Objective::upper_bound: return rate_upper(ctx, p);
    case Objective::lower_bound: return rate_lower(ctx, p);
  }
  throw Error("unknown objective");
}

double bound_in_direction(const MetricContext& ctx, CovertDirection d, const Eigen::VectorXd& p) {
  return d == CovertDirection::h0_h1 ? kl_h0_h1_upper(ctx, p) : kl_h1_h0_upper(ctx, p);
}

double exact_in_direction(const MetricContext& ctx, CovertDirection d, const Eigen::VectorXd& p) {
  return d == CovertDirection::h0_h1 ? kl_h0_h1_exact(ctx, p) : kl_h1_h0_exact(ctx, p);
}

Eigen::VectorXd renormalize(Eigen::VectorXd p) {
  p = p.cwiseMax(0.0);
  return p / p.sum();
}

struct InnerOutcome {
  Eigen::VectorXd p;
  SolveStatus status = SolveStatus::converged;
  int iterations = 0;
};

using SlackFn = std::function<double(const Eigen::VectorXd&)>;
using InnerSolver = std::function<InnerOutcome(const Surrogate&, const FeasibleRegion&, const Eigen::VectorXd&,
                                               int outer, std::vector<TraceEntry>&)>;

Eigen::VectorXd feasible_start(const FeasibleRegion& region, const Eigen::VectorXd& start) {
  if (region.contains(start, 1e-12)) return start;
  return project(region, start).vector();
}

InnerOutcome run_gdproj(const Surrogate& s, const FeasibleRegion& region, const Eigen::VectorXd& start,
                        const SolverConfig& cfg, int outer, const SlackFn& slack, std::vector<TraceEntry>& trace) {
  InnerOutcome out;
  Eigen::VectorXd p = feasible_start(region, start);
  out.status = SolveStatus::max_iters;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const Eigen::VectorXd g = s.grad(p);
    StepResult step = backtracking_step(s.f, g, p, region, cfg);
    out.iterations = it;
    if (step.alpha == 0.0) {
      out.status = SolveStatus::stalled;
      break;
    }
    const double moved = (step.p_next - p).norm();
    p = std::move(step.p_next);
    trace.push_back({it, outer, s.f(p), step.alpha, slack(p), 0.0});
    if (moved <= cfg.c2) {
      out.status = SolveStatus::converged;
      break;
    }
  }
  out.p = std::move(p);
  return out;
}

InnerOutcome run_frank_wolfe(const Surrogate& s, const FeasibleRegion& region, const Eigen::VectorXd& start,
                             const SolverConfig& cfg, double delta, int outer, const SlackFn& slack,
                             std::vector<TraceEntry>& trace) {
  InnerOutcome out;
  Eigen::VectorXd p = feasible_start(region, start);
  out.status = SolveStatus::max_iters;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const Eigen::VectorXd g = s.grad(p);
    const Eigen::VectorXd d = lp_min(region, g).vector() - p;
    const double gap = -g.dot(d);
    out.iterations = it;
    if (gap <= delta) {
      trace.push_back({it, outer, s.f(p), 0.0, slack(p), gap});
      out.status = SolveStatus::converged;
      break;
    }
    const double lambda = linesearch_1d([&](double l) { return s.f(p + l * d); }, cfg.linesearch_grid);
    if (lambda == 0.0) {
      trace.push_back({it, outer, s.f(p), 0.0, slack(p), gap});
      out.status = SolveStatus::stalled;
      break;
    }
    p = renormalize(p + lambda * d);
    trace.push_back({it, outer, s.f(p), lambda, slack(p), gap});
  }
  out.p = std::move(p);
  return out;
}

Eigen::VectorXd initial_point(const ProblemSpec& spec) {
  const auto K = static_cast<Eigen::Index>(spec.ctx->size());
  if (!spec.solver.random_start_seed) return Eigen::VectorXd::Constant(K, 1.0 / static_cast<double>(K));
  SplitMix64 rng(*spec.solver.random_start_seed);
  Eigen::VectorXd p(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    p[k] = -std::log(u);
  }
  return p / p.sum();
}

FeasibleRegion power_region(const MetricContext& ctx) {
  FeasibleRegion region(ctx.size());
  region.set_power(ctx.set().squared_magnitudes(), ctx.power_cap());
  return region;
}

// Smallest value D_U(p1||p0) can take anywhere on the power-feasible simplex.
// Per row, Jensen gives log2 (S_w p)_k >= -|g_w|^2 sum_j p_j |x_k - x_j|^2 / (2 sigma_w^2 ln 2),
// hence p^T log2(S_w p) >= -|g_w|^2 (P(p) - |E x|^2) / (sigma_w^2 ln 2); also (S_w p)_k >= p_k
// bounds it below by the negative entropy.
double kl_h1_h0_upper_floor(const MetricContext& ctx) {
  const double g2 = std::norm(ctx.channel().g_w);
  const double power = std::min(ctx.power_cap(), ctx.set().squared_magnitudes().maxCoeff());
  const double jensen = -g2 * power / (ctx.noise().sigma_w_sq() * kLn2);
  const double entropy = -std::log2(static_cast<double>(ctx.size()));
  return kl_h1_h0_upper_constant(ctx) + std::max(jensen, entropy);
}

// Point where the segment from `center` (within budget) to `to` crosses
// D_U(p1||p0) = budget; `to` itself if it is within budget.
Eigen::VectorXd pull_back(const MetricContext& ctx, const Eigen::VectorXd& center, const Eigen::VectorXd& to,
                          double budget) {
  if (kl_h1_h0_upper(ctx, to) <= budget) return to;
  if (kl_h1_h0_upper(ctx, center) > budget) return center;
  const Eigen::VectorXd d = to - center;
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 60 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    (kl_h1_h0_upper(ctx, center + mid * d) <= budget ? lo : hi) = mid;
  }
  return renormalize(center + lo * d);
}

void finalize(SolveResult& r, const ProblemSpec& spec, const Eigen::VectorXd& p) {
  const MetricContext& ctx = *spec.ctx;
  r.p_opt = p;
  r.objective_value = reported_rate(ctx, spec.objective, p);
  r.rate_exact = spec.objective == Objective::exact ? r.objective_value : rate_exact(ctx, p);
  r.constrained_bound = bound_in_direction(ctx, spec.covert.direction, p);
  r.exact_divergence = exact_in_direction(ctx, spec.covert.direction, p);
  r.bound_audit_passed = !spec.covert.active() || r.constrained_bound <= spec.covert.budget + 1e-6;
}

// Multiplier of the last general row (the linearized covert constraint) at a
// solution p of min F over `region`, from the stationarity conditions on the
// coordinates that are not at zero. Zero when that row is slack.
double covert_multiplier(const Eigen::VectorXd& grad, const Eigen::VectorXd& p, const FeasibleRegion& region) {
  const auto& rows = region.inequalities();
  std::vector<std::size_t> active;
  for (std::size_t l = 0; l < rows.size(); ++l)
    if (rows[l].b - rows[l].a.dot(p) <= 1e-9 * (1.0 + std::abs(rows[l].b))) active.push_back(l);
  if (active.empty() || active.back() != rows.size() - 1) return 0.0;
  std::vector<Eigen::Index> free_idx;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] > 1e-12) free_idx.push_back(i);
  const auto nf = static_cast<Eigen::Index>(free_idx.size());
  const auto na = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd A(nf, na + 1);
  Eigen::VectorXd rhs(nf);
  for (Eigen::Index f = 0; f < nf; ++f) {
    const Eigen::Index i = free_idx[static_cast<std::size_t>(f)];
    A(f, 0) = 1.0;
    for (Eigen::Index c = 0; c < na; ++c) A(f, c + 1) = rows[active[static_cast<std::size_t>(c)]].a[i];
    rhs[f] = -grad[i];
  }
  const Eigen::VectorXd mult = A.completeOrthogonalDecomposition().solve(rhs);
  return std::max(mult[na], 0.0);
}

SolveResult drive(const ProblemSpec& spec, const InnerSolver& inner) {
  if (!spec.ctx) throw Error("problem has no metric context");
  spec.solver.validate();
  spec.covert.validate();
  const MetricContext& ctx = *spec.ctx;
  const CovertnessSpec& cov = spec.covert;
  const Surrogate base = make_surrogate(ctx, spec.objective);

  SolveResult r;
  try {
    FeasibleRegion region = power_region(ctx);
    if (!cov.active() || cov.direction == CovertDirection::h0_h1) {
      if (cov.active()) region.set_covert_linear(ctx.kernels().t, std::exp2(-cov.budget));
      const Eigen::VectorXd start = feasible_start(region, initial_point(spec));
      InnerOutcome o = inner(base, region, start, 0, r.trace);
      r.iterations = o.iterations;
      r.status = o.status;
      finalize(r, spec, o.p);
      return r;
    }

    const double floor = kl_h1_h0_upper_floor(ctx);
    if (floor > cov.budget)
      throw InfeasibleError("covert", "D_U(p1||p0) is at least " + fmt_num(floor) + " for this channel, above the budget " +
                                          fmt_num(cov.budget));
    const BoundMinimum lowest = minimum_constrained_bound(ctx, CovertDirection::h1_h0);
    if (lowest.value > cov.budget)
      throw InfeasibleError("covert", "D_U(p1||p0) stays above the budget " + fmt_num(cov.budget) +
                                          " (smallest value " + fmt_num(lowest.value) + ")");
    const double C = kl_h1_h0_upper_constant(ctx);
    const Eigen::MatrixXd& Sw = ctx.kernels().s_w;
    Eigen::VectorXd anchor = pull_back(ctx, lowest.p, feasible_start(region, initial_point(spec)), cov.budget);

    // Re-linearize the bound at each outer solution. The bound is convex, so
    // its expansion alone under-estimates it and the plain iteration can
    // cycle; the gap f - L, weighted by the multiplier of the linearized row
    // from the previous pass, restores the curvature.
    double mu = 0.0;
    bool settled = false;
    SolveStatus inner_status = SolveStatus::converged;
    for (int outer = 1; outer <= spec.solver.max_outer; ++outer) {
      const AffineForm L = linearize_kl_upper(ctx, anchor);
      FeasibleRegion lin = region;
      lin.set_covert_affine(L.slope, L.offset() + C, cov.budget);
      Surrogate s = base;
      if (mu > 0.0) {
        s.f = [&base, &Sw, L, mu](const Eigen::VectorXd& p) {
          return base.f(p) + mu * (log_kernel_form(Sw, p) - L(p));
        };
        s.grad = [&base, &Sw, L, mu](const Eigen::VectorXd& p) {
          return Eigen::VectorXd(base.grad(p) + mu * (log_kernel_form_gradient(Sw, p) - L.slope));
        };
      }
      InnerOutcome o;
      try {
        o = inner(s, lin, anchor, outer, r.trace);
      } catch (const InfeasibleError&) {
        r.message = "linearized region became empty at outer iteration " + std::to_string(outer);
        inner_status = SolveStatus::stalled;
        break;
      }
      r.outer_iterations = outer;
      r.iterations += o.iterations;
      inner_status = o.status;
      const double moved = (o.p - anchor).norm();
      mu = covert_multiplier(s.grad(o.p), o.p, lin);
      anchor = std::move(o.p);
      if (spec.solver.single_shot_sca || moved <= spec.solver.c2) {
        settled = true;
        break;
      }
    }
    r.status = settled ? inner_status : (inner_status == SolveStatus::converged ? SolveStatus::max_iters : inner_status);
    finalize(r, spec, anchor);
    if (!r.bound_audit_passed && r.message.empty())
      r.message = "verbatim D_U(p1||p0) exceeds the budget at the returned point";
  } catch (const InfeasibleError& e) {
    r = SolveResult{};
    r.status = SolveStatus::infeasible;
    r.violated_constraint = e.constraint();
    r.message = e.what();
  }
  return r;
}

SlackFn slack_for(const ProblemSpec& spec) {
  const MetricContext* ctx = spec.ctx.get();
  const CovertnessSpec cov = spec.covert;
  if (!cov.active()) return [](const Eigen::VectorXd&) { return std::numeric_limits<double>::infinity(); };
  return [ctx, cov](const Eigen::VectorXd& p) { return cov.budget - bound_in_direction(*ctx, cov.direction, p); };
}

}  // namespace

SolveResult solve_exact_gdproj(const ProblemSpec& spec) {
  if (spec.objective != Objective::exact) throw Error("solve_exact_gdproj needs the exact objective");
  if (!spec.ctx) throw Error("problem has no metric context");
  const SlackFn slack = slack_for(spec);
  return drive(spec, [&](const Surrogate& s, const FeasibleRegion& region, const Eigen::VectorXd& start, int outer,
                         std::vector<TraceEntry>& trace) {
    return run_gdproj(s, region, start, spec.solver, outer, slack, trace);
  });
}

SolveResult solve_frank_wolfe(const ProblemSpec& spec) {
  if (spec.objective == Objective::exact) throw Error("solve_frank_wolfe needs a bound objective");
  if (!spec.ctx) throw Error("problem has no metric context");
  const SlackFn slack = slack_for(spec);
  return drive(spec, [&](const Surrogate& s, const FeasibleRegion& region, const Eigen::VectorXd& start, int outer,
                         std::vector<TraceEntry>& trace) {
    return run_frank_wolfe(s, region, start, spec.solver, spec.solver.delta, outer, slack, trace);
  });
}

BoundMinimum minimum_constrained_bound(const MetricContext& ctx, CovertDirection direction) {
  const FeasibleRegion region = power_region(ctx);
  BoundMinimum m;
  if (direction == CovertDirection::h0_h1) {
    m.p = lp_min(region, -ctx.kernels().t).vector();
    m.value = kl_h0_h1_upper(ctx, m.p);
    return m;
  }
  const Eigen::MatrixXd& S = ctx.kernels().s_w;
  auto f = [&](const Eigen::VectorXd& q) { return log_kernel_form(S, q); };
  const auto K = static_cast<Eigen::Index>(ctx.size());
  Eigen::VectorXd p = feasible_start(region, Eigen::VectorXd::Constant(K, 1.0 / static_cast<double>(K)));
  for (int it = 0; it < 20000; ++it) {
    const Eigen::VectorXd g = log_kernel_form_gradient(S, p);
    const Eigen::VectorXd d = lp_min(region, g).vector() - p;
    if (-g.dot(d) <= 1e-10) break;
    const double lambda = linesearch_1d([&](double l) { return f(p + l * d); }, 101);
    if (lambda == 0.0) break;
    p = renormalize(p + lambda * d);
  }
  m.p = p;
  m.value = kl_h1_h0_upper(ctx, p);
  return m;
}

SolveResult solve(const ProblemSpec& spec) {
  return spec.objective == Objective::exact ? solve_exact_gdproj(spec) : solve_frank_wolfe(spec);
}

DesignEvaluation evaluate_design(const MetricContext& ctx, const CovertnessSpec& covert, const Eigen::VectorXd& p) {
  DesignEvaluation e;
  e.p = p;
  e.rate_exact = rate_exact(ctx, p);
  e.rate_upper = rate_upper(ctx, p);
  e.rate_lower = rate_lower(ctx, p);
  e.kl_h0_h1_exact = kl_h0_h1_exact(ctx, p);
  e.kl_h1_h0_exact = kl_h1_h0_exact(ctx, p);
  e.kl_h0_h1_upper = kl_h0_h1_upper(ctx, p);
  e.kl_h1_h0_upper = kl_h1_h0_upper(ctx, p);
  const bool forward = covert.direction == CovertDirection::h0_h1;
  e.constrained_bound = forward ? e.kl_h0_h1_upper : e.kl_h1_h0_upper;
  e.exact_divergence = forward ? e.kl_h0_h1_exact : e.kl_h1_h0_exact;
  e.within_budget = e.constrained_bound <= covert.budget;
  e.exact_within_budget = e.exact_divergence <= covert.budget;
  return e;
}

DesignComparison compare_designs(const ProblemSpec& spec) {
  if (!spec.ctx) throw Error("problem has no metric context");
  DesignComparison c;
  c.optimized = solve(spec);
  if (c.optimized.status != SolveStatus::infeasible)
    c.optimized_eval = evaluate_design(*spec.ctx, spec.covert, c.optimized.p_opt);
  c.equiprobable = evaluate_design(*spec.ctx, spec.covert, equiprobable(spec.ctx->size()).vector());
  c.equiprobable_violates = !c.equiprobable.within_budget || !c.equiprobable.exact_within_budget;
  return c;
}

namespace {

nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

nlohmann::json vec(const Eigen::VectorXd& v) {
  auto j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

}  // namespace

void to_json(nlohmann::json& j, const SolveResult& r) {
  j = nlohmann::json{{"p_opt", vec(r.p_opt)},
                     {"objective_value", num(r.objective_value)},
                     {"rate_exact", num(r.rate_exact)},
                     {"constrained_bound", num(r.constrained_bound)},
                     {"exact_divergence", num(r.exact_divergence)},
                     {"iterations", r.iterations},
                     {"outer_iterations", r.outer_iterations},
                     {"status", to_string(r.status)},
                     {"violated_constraint", r.violated_constraint},
                     {"message", r.message},
                     {"bound_audit_passed", r.bound_audit_passed}};
}

void to_json(nlohmann::json& j, const DesignEvaluation& e) {
  j = nlohmann::json{{"p", vec(e.p)},
                     {"rate_exact", num(e.rate_exact)},
                     {"rate_upper", num(e.rate_upper)},
                     {"rate_lower", num(e.rate_lower)},
                     {"kl_h0_h1_exact", num(e.kl_h0_h1_exact)},
                     {"kl_h1_h0_exact", num(e.kl_h1_h0_exact)},
                     {"kl_h0_h1_upper", num(e.kl_h0_h1_upper)},
                     {"kl_h1_h0_upper", num(e.kl_h1_h0_upper)},
                     {"constrained_bound", num(e.constrained_bound)},
                     {"exact_divergence", num(e.exact_divergence)},
                     {"within_budget", e.within_budget},
                     {"exact_within_budget", e.exact_within_budget}};
}

void write_trace_csv(std::ostream& os, const SolveResult& r) {
  os << "outer,iter,objective,step,slack,gap\n";
  for (const auto& t : r.trace)
    os << t.outer << ',' << t.iter << ',' << fmt_num(t.objective) << ',' << fmt_num(t.step) << ',' << fmt_num(t.slack)
       << ',' << fmt_num(t.gap) << '\n';
}

}  // namespace cshape
