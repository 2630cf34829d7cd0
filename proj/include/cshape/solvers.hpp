#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cshape/metrics.hpp"
#include "cshape/optim_core.hpp"

namespace cshape {

enum class CovertDirection { h0_h1, h1_h0 };
enum class Objective { exact, upper_bound, lower_bound };
enum class SolveStatus { converged, max_iters, stalled, infeasible };

std::string to_string(CovertDirection d);
std::string to_string(Objective o);
std::string to_string(SolveStatus s);
CovertDirection parse_direction(const std::string& s);
Objective parse_objective(const std::string& s);

/// Which divergence is bounded, and by how much (the budget 2 eps^2, bits).
/// An infinite budget leaves only the simplex and power constraints.
struct CovertnessSpec {
  CovertDirection direction = CovertDirection::h0_h1;
  double budget = std::numeric_limits<double>::infinity();

  /// budget = 2 eps^2; eps must lie in [0, 1].
  static CovertnessSpec from_epsilon(CovertDirection direction, double epsilon);
  double epsilon() const { return std::sqrt(budget / 2.0); }
  bool active() const { return std::isfinite(budget); }
  void validate() const;
};

struct ProblemSpec {
  Objective objective = Objective::exact;
  CovertnessSpec covert;
  std::shared_ptr<const MetricContext> ctx;
  SolverConfig solver;
};

struct TraceEntry {
  int iter = 0;
  int outer = 0;
  double objective = 0.0;  // the minimized surrogate (phi, p^T log2(R p) or p^T log2(S_b p))
  double step = 0.0;       // alpha (projected gradient) or lambda (Frank-Wolfe)
  double slack = 0.0;      // budget minus the constrained bound; inf when unconstrained
  double gap = 0.0;        // Frank-Wolfe duality gap; 0 for projected gradient
};

struct SolveResult {
  Eigen::VectorXd p_opt;           // empty when infeasible
  double objective_value = std::numeric_limits<double>::quiet_NaN();  // rate in bits for the chosen objective
  double rate_exact = std::numeric_limits<double>::quiet_NaN();
  double constrained_bound = std::numeric_limits<double>::quiet_NaN();  // D_U in the constrained direction
  double exact_divergence = std::numeric_limits<double>::quiet_NaN();   // exact KL in that direction
  int iterations = 0;
  int outer_iterations = 0;
  std::vector<TraceEntry> trace;
  SolveStatus status = SolveStatus::converged;
  std::string violated_constraint;
  std::string message;
  bool bound_audit_passed = true;  // verbatim D_U(p1||p0) <= budget at p_opt
};

/// Exact rate by projected gradient with Armijo backtracking. For the
/// h1_h0 direction the bound is linearized and re-linearized around each
/// inner solution (SCA).
SolveResult solve_exact_gdproj(const ProblemSpec& spec);

/// Upper- or lower-bound rate by Frank-Wolfe with an LP direction and an
/// exact line search. Same SCA loop for h1_h0.
SolveResult solve_frank_wolfe(const ProblemSpec& spec);

/// Smallest value the constrained bound takes on the power-feasible simplex,
/// with a minimizer. Budgets below it are infeasible.
struct BoundMinimum {
  double value = 0.0;
  Eigen::VectorXd p;
};
BoundMinimum minimum_constrained_bound(const MetricContext& ctx, CovertDirection direction);

/// Dispatches on spec.objective.
SolveResult solve(const ProblemSpec& spec);

struct DesignEvaluation {
  Eigen::VectorXd p;
  double rate_exact = 0.0;
  double rate_upper = 0.0;
  double rate_lower = 0.0;
  double kl_h0_h1_exact = 0.0;
  double kl_h1_h0_exact = 0.0;
  double kl_h0_h1_upper = 0.0;
  double kl_h1_h0_upper = 0.0;
  double constrained_bound = 0.0;   // in the spec's direction
  double exact_divergence = 0.0;    // in the spec's direction
  bool within_budget = true;        // constrained_bound <= budget
  bool exact_within_budget = true;  // exact_divergence <= budget
};

DesignEvaluation evaluate_design(const MetricContext& ctx, const CovertnessSpec& covert, const Eigen::VectorXd& p);

struct DesignComparison {
  SolveResult optimized;
  DesignEvaluation optimized_eval;  // meaningless when optimized is infeasible
  DesignEvaluation equiprobable;
  bool equiprobable_violates = false;  // bound or exact divergence above budget
};

DesignComparison compare_designs(const ProblemSpec& spec);

void to_json(nlohmann::json& j, const SolveResult& r);
void to_json(nlohmann::json& j, const DesignEvaluation& e);
/// Columns: outer,iter,objective,step,slack,gap.
void write_trace_csv(std::ostream& os, const SolveResult& r);

}  // namespace cshape
