#include "cshape/optim_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cshape/error.hpp"

namespace cshape {

// FeasibleRegion ---------------------------------------------------------------------

FeasibleRegion::FeasibleRegion(std::size_t K) : K_(K) {
  if (K == 0) throw Error("feasible region needs K >= 1");
}

FeasibleRegion& FeasibleRegion::set_power(Eigen::VectorXd weights, double cap) {
  if (static_cast<std::size_t>(weights.size()) != K_) throw Error("power weights have the wrong size");
  power_ = LinearInequality{std::move(weights), cap, "power"};
  rebuild();
  return *this;
}

FeasibleRegion& FeasibleRegion::set_covert_linear(Eigen::VectorXd t, double threshold) {
  if (static_cast<std::size_t>(t.size()) != K_) throw Error("covert kernel has the wrong size");
  covert_ = LinearInequality{-t, -threshold, "covert"};
  rebuild();
  return *this;
}

FeasibleRegion& FeasibleRegion::set_covert_affine(Eigen::VectorXd slope, double offset, double budget) {
  if (static_cast<std::size_t>(slope.size()) != K_) throw Error("covert slope has the wrong size");
  covert_ = LinearInequality{std::move(slope), budget - offset, "covert"};
  rebuild();
  return *this;
}

FeasibleRegion& FeasibleRegion::clear_covert() {
  covert_.reset();
  rebuild();
  return *this;
}

void FeasibleRegion::rebuild() {
  rows_.clear();
  if (power_) rows_.push_back(*power_);
  if (covert_) rows_.push_back(*covert_);
}

double FeasibleRegion::max_violation(const Eigen::VectorXd& p) const {
  if (static_cast<std::size_t>(p.size()) != K_) throw Error("point has the wrong size");
  double worst = std::abs(p.sum() - 1.0);
  worst = std::max(worst, -p.minCoeff());
  for (const auto& row : rows_) worst = std::max(worst, row.a.dot(p) - row.b);
  return std::max(worst, 0.0);
}

void SolverConfig::validate() const {
  if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) throw Error("alpha_bar must lie in (0, 1]");
  if (!(rho > 0.0 && rho < 1.0)) throw Error("rho must lie in (0, 1)");
  if (!(c > 0.0 && c < 1.0)) throw Error("c must lie in (0, 1)");
  if (!(c2 > 0.0)) throw Error("c2 must be positive");
  if (!(delta > 0.0)) throw Error("delta must be positive");
  if (max_iters < 1) throw Error("max_iters must be >= 1");
  if (linesearch_grid < 2) throw Error("linesearch_grid must be >= 2");
  if (max_outer < 1) throw Error("max_outer must be >= 1");
}

namespace {

constexpr double kPivotTol = 1e-11;

// Names the constraint that makes the region empty. Each general constraint is
// checked alone against the simplex, where min a^T p = min_k a_k.
std::string diagnose_infeasible(const FeasibleRegion& region) {
  std::vector<std::string> alone;
  for (const auto& row : region.inequalities())
    if (row.a.minCoeff() > row.b + 1e-12) alone.push_back(row.name);
  if (alone.size() == 1) return alone.front();
  std::string joined;
  for (const auto& row : region.inequalities()) joined += (joined.empty() ? "" : "+") + row.name;
  return joined.empty() ? "simplex" : joined;
}

[[noreturn]] void throw_infeasible(const FeasibleRegion& region) {
  const std::string name = diagnose_infeasible(region);
  throw InfeasibleError(name, "feasible region is empty (violated constraint: " + name + ")");
}

// Dense two-phase simplex for min c^T x, A x = b, x >= 0 with b >= 0.
// Bland's rule for both entering and leaving variables.
class SimplexTableau {
 public:
  SimplexTableau(const Eigen::MatrixXd& A, const Eigen::VectorXd& b)
      : m_(A.rows()), n_(A.cols()), T_(A.rows(), A.cols() + A.rows() + 1), basis_(static_cast<std::size_t>(A.rows())) {
    T_.setZero();
    T_.leftCols(n_) = A;
    T_.block(0, n_, m_, m_).setIdentity();
    T_.col(n_ + m_) = b;
    for (Eigen::Index i = 0; i < m_; ++i) basis_[static_cast<std::size_t>(i)] = n_ + i;
  }

  bool phase_one() {
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(n_ + m_);
    cost.tail(m_).setOnes();
    optimize(cost, n_ + m_);
    double infeasibility = 0.0;
    for (Eigen::Index i = 0; i < m_; ++i)
      if (basis_[static_cast<std::size_t>(i)] >= n_) infeasibility += T_(i, n_ + m_);
    if (infeasibility > 1e-9) return false;
    // Pivot zero-valued artificials out of the basis where possible; rows
    // where that fails are redundant and stay inert.
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (basis_[static_cast<std::size_t>(i)] < n_) continue;
      for (Eigen::Index j = 0; j < n_; ++j) {
        if (std::abs(T_(i, j)) > 1e-9 && !is_basic(j)) {
          pivot(i, j);
          break;
        }
      }
    }
    return true;
  }

  void phase_two(const Eigen::VectorXd& c) {
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(n_ + m_);
    cost.head(n_) = c;
    optimize(cost, n_);
  }

  Eigen::VectorXd solution() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
    for (Eigen::Index i = 0; i < m_; ++i) {
      const Eigen::Index j = basis_[static_cast<std::size_t>(i)];
      if (j < n_) x[j] = std::max(T_(i, n_ + m_), 0.0);
    }
    return x;
  }

 private:
  bool is_basic(Eigen::Index j) const { return std::find(basis_.begin(), basis_.end(), j) != basis_.end(); }

  void optimize(const Eigen::VectorXd& cost, Eigen::Index allowed_cols) {
    const Eigen::Index rhs = n_ + m_;
    const int max_pivots = 50 * static_cast<int>(n_ + m_) + 1000;
    for (int it = 0; it < max_pivots; ++it) {
      Eigen::Index entering = -1;
      for (Eigen::Index j = 0; j < allowed_cols && entering < 0; ++j) {
        if (is_basic(j)) continue;
        double reduced = cost[j];
        for (Eigen::Index i = 0; i < m_; ++i) reduced -= cost[basis_[static_cast<std::size_t>(i)]] * T_(i, j);
        if (reduced < -kPivotTol) entering = j;
      }
      if (entering < 0) return;
      Eigen::Index leaving = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < m_; ++i) {
        const double a = T_(i, entering);
        if (a <= kPivotTol) continue;
        const double ratio = std::max(T_(i, rhs), 0.0) / a;
        if (ratio < best - 1e-14 ||
            (ratio <= best + 1e-14 && leaving >= 0 &&
             basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leaving)])) {
          best = std::min(best, ratio);
          leaving = i;
        }
      }
      if (leaving < 0) throw NumericalError("linear program is unbounded");
      pivot(leaving, entering);
    }
    throw NumericalError("simplex method exceeded its pivot limit");
  }

  void pivot(Eigen::Index row, Eigen::Index col) {
    T_.row(row) /= T_(row, col);
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (i == row) continue;
      const double factor = T_(i, col);
      if (factor != 0.0) T_.row(i) -= factor * T_.row(row);
    }
    basis_[static_cast<std::size_t>(row)] = col;
  }

  Eigen::Index m_;
  Eigen::Index n_;
  Eigen::MatrixXd T_;
  std::vector<Eigen::Index> basis_;
};

// Euclidean projection onto the probability simplex (sort-based).
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double shift = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    cumulative += sorted[i];
    const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - candidate > 0.0) shift = candidate;
  }
  return (v.array() - shift).max(0.0).matrix();
}

Eigen::VectorXd clean(Eigen::VectorXd p) {
  p = p.cwiseMax(0.0);
  const double s = p.sum();
  if (s > 0.0) p /= s;
  return p;
}

}  // namespace

ProbabilityVector lp_min(const FeasibleRegion& region, const Eigen::VectorXd& cost) {
  const auto K = static_cast<Eigen::Index>(region.size());
  if (cost.size() != K) throw Error("LP cost has the wrong size");
  const auto& rows = region.inequalities();
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 1, K + m);
  Eigen::VectorXd b(m + 1);
  A.row(0).head(K).setOnes();
  b[0] = 1.0;
  for (Eigen::Index l = 0; l < m; ++l) {
    const auto& row = rows[static_cast<std::size_t>(l)];
    A.row(l + 1).head(K) = row.a.transpose();
    A(l + 1, K + l) = 1.0;
    b[l + 1] = row.b;
    if (row.b < 0.0) {
      A.row(l + 1) *= -1.0;
      b[l + 1] *= -1.0;
    }
  }
  SimplexTableau tableau(A, b);
  if (!tableau.phase_one()) throw_infeasible(region);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(K + m);
  c.head(K) = cost;
  tableau.phase_two(c);
  return ProbabilityVector(clean(tableau.solution().head(K)));
}

ProbabilityVector project(const FeasibleRegion& region, const Eigen::VectorXd& p_hat) {
  const auto K = static_cast<Eigen::Index>(region.size());
  if (p_hat.size() != K) throw Error("point to project has the wrong size");
  if (!p_hat.allFinite()) throw NumericalError("point to project is not finite");
  if (p_hat.minCoeff() >= 0.0 && region.max_violation(p_hat) <= 1e-12) return ProbabilityVector(p_hat);

  const auto& rows = region.inequalities();
  const auto m = static_cast<Eigen::Index>(rows.size());

  // The simplex projection is the answer whenever it already satisfies the
  // general constraints.
  {
    Eigen::VectorXd q = project_simplex(p_hat);
    if (region.max_violation(q) <= 1e-12) return ProbabilityVector(clean(q));
  }

  // Primal active set from a feasible vertex. Working set: the equality
  // sum p = 1 (always), bounds p_i = 0 for i in `fixed`, and general rows in
  // `active_rows`.
  Eigen::VectorXd x = lp_min(region, -p_hat).vector();
  std::vector<bool> fixed(static_cast<std::size_t>(K), false);
  for (Eigen::Index i = 0; i < K; ++i) fixed[static_cast<std::size_t>(i)] = (x[i] == 0.0);
  std::vector<bool> active_rows(static_cast<std::size_t>(m), false);

  int last_dropped_row = -1;
  Eigen::Index last_dropped_bound = -1;
  const int max_iters = 20 * static_cast<int>(K + m) + 100;
  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<Eigen::Index> free_idx;
    for (Eigen::Index i = 0; i < K; ++i)
      if (!fixed[static_cast<std::size_t>(i)]) free_idx.push_back(i);
    std::vector<Eigen::Index> act;
    for (Eigen::Index l = 0; l < m; ++l)
      if (active_rows[static_cast<std::size_t>(l)]) act.push_back(l);

    const auto nf = static_cast<Eigen::Index>(free_idx.size());
    const auto nr = static_cast<Eigen::Index>(act.size()) + 1;
    Eigen::MatrixXd M(nr, nf);
    Eigen::VectorXd d(nr);
    Eigen::VectorXd target(nf);
    for (Eigen::Index f = 0; f < nf; ++f) {
      M(0, f) = 1.0;
      target[f] = p_hat[free_idx[static_cast<std::size_t>(f)]];
    }
    d[0] = 1.0;
    for (Eigen::Index r = 1; r < nr; ++r) {
      const auto& row = rows[static_cast<std::size_t>(act[static_cast<std::size_t>(r - 1)])];
      for (Eigen::Index f = 0; f < nf; ++f) M(r, f) = row.a[free_idx[static_cast<std::size_t>(f)]];
      d[r] = row.b;
    }
    // Equality-constrained minimizer on the free coordinates:
    // p_F = target - M^T lambda with (M M^T) lambda = M target - d.
    const Eigen::MatrixXd gram = M * M.transpose();
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gram);
    const Eigen::VectorXd lambda = cod.solve(M * target - d);
    const Eigen::VectorXd p_eq = target - M.transpose() * lambda;

    Eigen::VectorXd step = Eigen::VectorXd::Zero(K);
    for (Eigen::Index f = 0; f < nf; ++f) {
      const Eigen::Index i = free_idx[static_cast<std::size_t>(f)];
      step[i] = p_eq[f] - x[i];
    }

    if (step.norm() <= 1e-11) {
      // Stationary on the working set: check multiplier signs.
      double most_negative = -1e-12;
      int drop_row = -1;
      Eigen::Index drop_bound = -1;
      for (std::size_t r = 0; r < act.size(); ++r) {
        if (lambda[static_cast<Eigen::Index>(r + 1)] < most_negative) {
          most_negative = lambda[static_cast<Eigen::Index>(r + 1)];
          drop_row = static_cast<int>(act[r]);
          drop_bound = -1;
        }
      }
      for (Eigen::Index i = 0; i < K; ++i) {
        if (!fixed[static_cast<std::size_t>(i)]) continue;
        double mu = x[i] - p_hat[i] + lambda[0];
        for (std::size_t r = 0; r < act.size(); ++r)
          mu += lambda[static_cast<Eigen::Index>(r + 1)] * rows[static_cast<std::size_t>(act[r])].a[i];
        if (mu < most_negative) {
          most_negative = mu;
          drop_bound = i;
          drop_row = -1;
        }
      }
      if (drop_row < 0 && drop_bound < 0) return ProbabilityVector(clean(x));
      if (drop_row >= 0)
        active_rows[static_cast<std::size_t>(drop_row)] = false;
      else
        fixed[static_cast<std::size_t>(drop_bound)] = false;
      last_dropped_row = drop_row;
      last_dropped_bound = drop_bound;
      continue;
    }

    // Longest feasible fraction of the step; the first blocking constraint
    // joins the working set.
    double alpha = 1.0;
    Eigen::Index block_bound = -1;
    int block_row = -1;
    for (Eigen::Index i = 0; i < K; ++i) {
      if (fixed[static_cast<std::size_t>(i)] || step[i] >= 0.0) continue;
      const double a = std::max(x[i], 0.0) / -step[i];
      if (a < alpha) {
        alpha = a;
        block_bound = i;
        block_row = -1;
      }
    }
    for (Eigen::Index l = 0; l < m; ++l) {
      if (active_rows[static_cast<std::size_t>(l)]) continue;
      const auto& row = rows[static_cast<std::size_t>(l)];
      const double rate = row.a.dot(step);
      if (rate <= 1e-15) continue;
      // Rows that are numerically a combination of the working set would make
      // it singular; along a null-space step they cannot really block.
      Eigen::VectorXd a_free(nf);
      for (Eigen::Index f = 0; f < nf; ++f) a_free[f] = row.a[free_idx[static_cast<std::size_t>(f)]];
      const Eigen::VectorXd residual = a_free - M.transpose() * cod.solve(M * a_free);
      if (residual.norm() <= 1e-9 * a_free.norm()) continue;
      const double a = std::max(row.b - row.a.dot(x), 0.0) / rate;
      if (a < alpha) {
        alpha = a;
        block_row = static_cast<int>(l);
        block_bound = -1;
      }
    }
    // A null step straight back into the constraint just released means the
    // working set is degenerate at an optimum.
    if (alpha == 0.0 && ((block_bound >= 0 && block_bound == last_dropped_bound) ||
                         (block_row >= 0 && block_row == last_dropped_row)))
      return ProbabilityVector(clean(x));
    last_dropped_row = -1;
    last_dropped_bound = -1;
    x += alpha * step;
    if (block_bound >= 0) {
      fixed[static_cast<std::size_t>(block_bound)] = true;
      x[block_bound] = 0.0;
    } else if (block_row >= 0) {
      active_rows[static_cast<std::size_t>(block_row)] = true;
    }
  }
  throw NumericalError("projection active-set method did not terminate");
}

StepResult backtracking_step(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& grad,
                             const Eigen::VectorXd& p_n, const FeasibleRegion& region, const SolverConfig& cfg) {
  const double f_n = f(p_n);
  double alpha = cfg.alpha_bar;
  while (alpha >= 1e-12) {
    Eigen::VectorXd p_next = project(region, p_n - alpha * grad).vector();
    if (f(p_next) <= f_n + cfg.c * grad.dot(p_next - p_n)) return {alpha, std::move(p_next)};
    alpha *= cfg.rho;
  }
  return {0.0, p_n};
}

double linesearch_1d(const std::function<double(double)>& f, int grid) {
  if (grid < 2) throw Error("line-search grid needs at least 2 points");
  int best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid; ++i) {
    const double v = f(static_cast<double>(i) / (grid - 1));
    if (v < best_value) {
      best_value = v;
      best = i;
    }
  }
  double lo = static_cast<double>(std::max(best - 1, 0)) / (grid - 1);
  double hi = static_cast<double>(std::min(best + 1, grid - 1)) / (grid - 1);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - inv_phi * (hi - lo);
  double b = lo + inv_phi * (hi - lo);
  double fa = f(a), fb = f(b);
  while (hi - lo > 1e-9) {
    if (fa <= fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - inv_phi * (hi - lo);
      fa = f(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + inv_phi * (hi - lo);
      fb = f(b);
    }
  }
  double lambda = 0.5 * (lo + hi);
  double value = f(lambda);
  // Endpoints of the bracket are candidates too (boundary optima).
  for (double cand : {lo, hi}) {
    const double v = f(cand);
    if (v < value) {
      value = v;
      lambda = cand;
    }
  }
  if (best_value < value) lambda = static_cast<double>(best) / (grid - 1);
  return lambda;
}

}  // namespace cshape
