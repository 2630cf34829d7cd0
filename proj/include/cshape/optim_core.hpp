#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cshape/constellation.hpp"

namespace cshape {

/// a^T p <= b.
struct LinearInequality {
  Eigen::VectorXd a;
  double b = 0.0;
  std::string name;
};

/// The polytope every solver works over: the probability simplex intersected
/// with an average-power half-space and at most one covertness half-space.
///
/// The covertness constraint -log2(p^T t) <= 2 eps^2 is held in its linear
/// form p^T t >= 2^(-2 eps^2); the linearized D(p1||p0) bound is held as
/// slope^T p + offset <= budget.
class FeasibleRegion {
 public:
  explicit FeasibleRegion(std::size_t K);

  FeasibleRegion& set_power(Eigen::VectorXd weights, double cap);
  FeasibleRegion& set_covert_linear(Eigen::VectorXd t, double threshold);
  FeasibleRegion& set_covert_affine(Eigen::VectorXd slope, double offset, double budget);
  FeasibleRegion& clear_covert();

  std::size_t size() const { return K_; }
  /// General constraints in a^T p <= b form: power first, then covert.
  const std::vector<LinearInequality>& inequalities() const { return rows_; }

  /// Largest violation of any constraint (simplex, sign, general); 0 if feasible.
  double max_violation(const Eigen::VectorXd& p) const;
  bool contains(const Eigen::VectorXd& p, double tol = 1e-9) const { return max_violation(p) <= tol; }

 private:
  void rebuild();

  std::size_t K_;
  std::optional<LinearInequality> power_;
  std::optional<LinearInequality> covert_;
  std::vector<LinearInequality> rows_;
};

/// Tunables of the iterative solvers.
struct SolverConfig {
  double alpha_bar = 1.0;      // initial backtracking step
  double rho = 0.5;            // backtracking shrink factor
  double c = 1e-4;             // Armijo constant
  double c2 = 1e-6;            // stop when ||p_n - p_{n-1}|| <= c2
  double delta = 1e-6;         // Frank-Wolfe gap tolerance
  int max_iters = 5000;
  int linesearch_grid = 101;
  int max_outer = 50;          // re-linearizations of the D(p1||p0) bound
  bool single_shot_sca = false;
  std::optional<std::uint64_t> random_start_seed;

  void validate() const;
};

/// Euclidean projection onto the region (primal active-set QP). A point that
/// is already feasible is returned unchanged. Throws InfeasibleError.
ProbabilityVector project(const FeasibleRegion& region, const Eigen::VectorXd& p_hat);

/// Vertex minimizer of cost^T p over the region (two-phase simplex method,
/// Bland's rule). Throws InfeasibleError.
ProbabilityVector lp_min(const FeasibleRegion& region, const Eigen::VectorXd& cost);

struct StepResult {
  double alpha = 0.0;      // 0 signals a stall
  Eigen::VectorXd p_next;
};

/// One projected-gradient step with Armijo backtracking:
/// p_next = project(p_n - alpha * grad), shrinking alpha by rho until
/// f(p_next) <= f(p_n) + c * grad^T (p_next - p_n). Returns p_n with
/// alpha = 0 once alpha drops below 1e-12.
StepResult backtracking_step(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& grad, const Eigen::VectorXd& p_n,
                             const FeasibleRegion& region, const SolverConfig& cfg);

/// argmin over [0, 1]: best of a uniform grid of `grid` points, refined by
/// golden-section search on the neighbouring grid cells.
double linesearch_1d(const std::function<double(double)>& f, int grid);

}  // namespace cshape
