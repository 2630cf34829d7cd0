#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "cshape/channel.hpp"
#include "cshape/constellation.hpp"
#include "cshape/quadrature.hpp"

namespace cshape {

inline constexpr double kLn2 = 0.69314718055994530942;
inline constexpr double kInvLn2 = 1.0 / kLn2;
/// Floor applied to mixture sums before taking logarithms.
inline constexpr double kMixtureFloor = 1e-300;

/// Closed-form Gaussian kernels shared by the bound evaluators.
///
///   t_k      = exp(-|g_w|^2 |x_k|^2 / sigma_w^2)
///   r_kj     = exp(-|g_b|^2 |x_k - x_j|^2 / sigma_b^2)
///   s_b(k,j) = exp(-|g_b|^2 |x_k - x_j|^2 / (2 sigma_b^2))
///   s_w(k,j) = exp(-|g_w|^2 |x_k - x_j|^2 / (2 sigma_w^2))
struct Kernels {
  Eigen::VectorXd t;
  Eigen::MatrixXd r;
  Eigen::MatrixXd s_b;
  Eigen::MatrixXd s_w;

  static Kernels build(const ConstellationSet& set, const ChannelRealization& ch, const NoiseModel& noise);
};

/// Discretized expectations of the form
///
///   E_z{ log2 sum_j p_j exp(-|d_kj + z|^2 / sigma^2) },   z ~ CN(0, sigma^2),
///
/// for a fixed complex shift matrix d (rows k, columns j). The exponentials are
/// evaluated once per node and stored relative to the row-wise minimum
/// exponent, so every stored entry lies in (0, 1].
class MixtureExpectation {
 public:
  MixtureExpectation(const Eigen::MatrixXcd& shifts, double sigma_sq, std::vector<GaussianNode> nodes);

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<GaussianNode>& nodes() const { return nodes_; }

  /// Row-wise expectations E_z{log2 m_k(z)} for every row k.
  Eigen::VectorXd row_log_means(const Eigen::VectorXd& p) const;

  /// sum_k a_k E_z{log2 m_k(z)} and, when `grad` is non-null, its gradient
  /// with respect to p (with `a` held fixed):
  ///   grad_j = sum_k a_k E_z{ e_kj(z) / (m_k(z) ln 2) }.
  double weighted_log_mean(const Eigen::VectorXd& a, const Eigen::VectorXd& p, Eigen::VectorXd* grad) const;

 private:
  template <typename Fn>
  void for_each_block(Fn&& fn) const;
  void fill_block(std::size_t first, std::size_t count, Eigen::MatrixXd& block, Eigen::VectorXd& base) const;

  Eigen::MatrixXcd shifts_;
  double sigma_sq_;
  std::vector<GaussianNode> nodes_;
  Eigen::Index rows_;
  Eigen::Index cols_;
  // Node-major blocks: row (n - first) * rows_ + k holds exp(-(a_kjn - base_kn)).
  std::vector<Eigen::MatrixXd> cached_blocks_;
  std::vector<Eigen::VectorXd> cached_base_;
  std::size_t block_nodes_;
};

/// Everything a metric needs besides p. Immutable; kernels and quadrature
/// tables are built once at construction and shared between copies.
///
/// Only |g_b| and |g_w| enter any metric: the noise is circularly symmetric,
/// so the phase of a gain can be absorbed into z. Kernels are therefore built
/// with the real gains |g_b|, |g_w|, which keeps the tensor quadrature grid
/// aligned with the constellation's own symmetries.
class MetricContext {
 public:
  MetricContext(ConstellationSet set, double power_cap, ChannelRealization ch, NoiseModel noise,
                QuadratureConfig quad = {});

  const ConstellationSet& set() const { return set_; }
  double power_cap() const { return power_cap_; }
  const ChannelRealization& channel() const { return ch_; }
  const NoiseModel& noise() const { return noise_; }
  const QuadratureConfig& quadrature() const { return quad_; }
  const Kernels& kernels() const { return caches_->kernels; }
  std::size_t size() const { return set_.size(); }

  const MixtureExpectation& bob_objective() const { return *caches_->bob_objective; }
  const MixtureExpectation& bob_gradient() const { return *caches_->bob_gradient; }
  const MixtureExpectation& willie_h0() const { return *caches_->willie_h0; }
  const MixtureExpectation& willie_h1() const { return *caches_->willie_h1; }
  /// E_z{|mu_k + z|^2} / sigma_w^2 per component, on the Willie nodes.
  const Eigen::VectorXd& willie_h1_energy() const { return caches_->willie_h1_energy; }

 private:
  struct Caches {
    Kernels kernels;
    std::shared_ptr<const MixtureExpectation> bob_objective;
    std::shared_ptr<const MixtureExpectation> bob_gradient;
    std::shared_ptr<const MixtureExpectation> willie_h0;
    std::shared_ptr<const MixtureExpectation> willie_h1;
    Eigen::VectorXd willie_h1_energy;
  };

  ConstellationSet set_;
  double power_cap_;
  ChannelRealization ch_;
  NoiseModel noise_;
  QuadratureConfig quad_;
  std::shared_ptr<const Caches> caches_;
};

// Exact rate ------------------------------------------------------------------

/// phi(p) = sum_k p_k E{log2 sum_j p_j exp(-|g_b(x_k - x_j) + z_b|^2 / sigma_b^2)},
/// the quantity minimized by the exact-rate solver (R_b = -phi - 1/ln2).
double exact_objective(const MetricContext& ctx, const Eigen::VectorXd& p);

/// Gradient of exact_objective, E{q + Q p}. Uses the gradient (tau2) nodes.
Eigen::VectorXd exact_objective_gradient(const MetricContext& ctx, const Eigen::VectorXd& p);

/// Bob's achievable rate in bits per channel use.
double rate_exact(const MetricContext& ctx, const Eigen::VectorXd& p);

// Closed-form rate bounds -------------------------------------------------------

/// p^T log2(S p), the common shape of every closed-form bound here.
double log_kernel_form(const Eigen::MatrixXd& S, const Eigen::VectorXd& p);
/// log2(S p) + S^T (p ./ S p) / ln 2.
Eigen::VectorXd log_kernel_form_gradient(const Eigen::MatrixXd& S, const Eigen::VectorXd& p);

/// R_b^U = -p^T u(p), u_k = log2(p^T r_k).
double rate_upper(const MetricContext& ctx, const Eigen::VectorXd& p);
/// R_b^L = -p^T v_b(p) - 1/ln2 + 1. May be negative.
double rate_lower(const MetricContext& ctx, const Eigen::VectorXd& p);

// Willie-side divergences (bits) ------------------------------------------------

/// D(p_{y,0} || p_{y,1}) by quadrature.
double kl_h0_h1_exact(const MetricContext& ctx, const Eigen::VectorXd& p);
/// D(p_{y,1} || p_{y,0}) by integrating p1 log2(p1 / p0) component by component.
/// The H1 energy term uses the actual mixture power, not P_A.
double kl_h1_h0_exact(const MetricContext& ctx, const Eigen::VectorXd& p);

/// -log2(p^T t).
double kl_h0_h1_upper(const MetricContext& ctx, const Eigen::VectorXd& p);
/// p^T v_w(p) + 1/ln2 + |g_w|^2 P_A / (sigma_w^2 ln 2) - 1, with the power cap
/// P_A as written in the bound. It bounds kl_h1_h0_exact only where the mean
/// power p^T |x|^2 is at most P_A.
double kl_h1_h0_upper(const MetricContext& ctx, const Eigen::VectorXd& p);
/// The p-independent part 1/ln2 + |g_w|^2 P_A / (sigma_w^2 ln 2) - 1.
double kl_h1_h0_upper_constant(const MetricContext& ctx);

/// First-order expansion of p^T v_w(p) around an anchor p_bar:
///   L(p) = p_bar^T v_w(p_bar) + slope^T (p - p_bar),
///   slope = v_w(p_bar) + [s_w,k / (p_bar^T s_w,k ln 2)]_k p_bar.
struct AffineForm {
  Eigen::VectorXd anchor;
  Eigen::VectorXd slope;
  double anchor_value = 0.0;

  double operator()(const Eigen::VectorXd& p) const { return anchor_value + slope.dot(p - anchor); }
  /// Constant term c such that L(p) = slope^T p + c.
  double offset() const { return anchor_value - slope.dot(anchor); }
};

AffineForm linearize_kl_upper(const MetricContext& ctx, const Eigen::VectorXd& p_bar);

}  // namespace cshape
