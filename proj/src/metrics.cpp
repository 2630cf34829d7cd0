#include "cshape/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cshape/error.hpp"

namespace cshape {

namespace {

// Above this many stored doubles the per-node exponentials are recomputed on
// every evaluation instead of being cached.
constexpr std::size_t kMaxCachedEntries = std::size_t{1} << 23;
constexpr std::size_t kBlockEntries = std::size_t{1} << 16;

Eigen::MatrixXd gaussian_kernel(const ConstellationSet& set, double gain_sq, double denom) {
  const auto K = static_cast<Eigen::Index>(set.size());
  Eigen::MatrixXd S(K, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    S(k, k) = 1.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double v = std::exp(-gain_sq * std::norm(set[k] - set[j]) / denom);
      S(k, j) = v;
      S(j, k) = v;
    }
  }
  return S;
}

Eigen::MatrixXcd pairwise_shifts(const ConstellationSet& set, double gain) {
  const auto K = static_cast<Eigen::Index>(set.size());
  Eigen::MatrixXcd d(K, K);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index j = 0; j < K; ++j) d(k, j) = gain * (set[k] - set[j]);
  return d;
}

}  // namespace

Kernels Kernels::build(const ConstellationSet& set, const ChannelRealization& ch, const NoiseModel& noise) {
  Kernels out;
  const double gb2 = std::norm(ch.g_b);
  const double gw2 = std::norm(ch.g_w);
  const auto K = static_cast<Eigen::Index>(set.size());
  out.t.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) out.t[k] = std::exp(-gw2 * std::norm(set[k]) / noise.sigma_w_sq());
  out.r = gaussian_kernel(set, gb2, noise.sigma_b_sq());
  out.s_b = gaussian_kernel(set, gb2, 2.0 * noise.sigma_b_sq());
  out.s_w = gaussian_kernel(set, gw2, 2.0 * noise.sigma_w_sq());
  return out;
}

// MixtureExpectation -------------------------------------------------------------

MixtureExpectation::MixtureExpectation(const Eigen::MatrixXcd& shifts, double sigma_sq,
                                       std::vector<GaussianNode> nodes)
    : shifts_(shifts),
      sigma_sq_(sigma_sq),
      nodes_(std::move(nodes)),
      rows_(shifts.rows()),
      cols_(shifts.cols()) {
  const auto per_node = static_cast<std::size_t>(rows_ * cols_);
  block_nodes_ = std::max<std::size_t>(1, kBlockEntries / std::max<std::size_t>(per_node, 1));
  if (per_node * nodes_.size() <= kMaxCachedEntries) {
    for (std::size_t first = 0; first < nodes_.size(); first += block_nodes_) {
      const std::size_t count = std::min(block_nodes_, nodes_.size() - first);
      Eigen::MatrixXd block;
      Eigen::VectorXd base;
      fill_block(first, count, block, base);
      cached_blocks_.push_back(std::move(block));
      cached_base_.push_back(std::move(base));
    }
  }
}

void MixtureExpectation::fill_block(std::size_t first, std::size_t count, Eigen::MatrixXd& block,
                                    Eigen::VectorXd& base) const {
  const auto n_rows = static_cast<Eigen::Index>(count) * rows_;
  block.resize(n_rows, cols_);
  base.resize(n_rows);
  Eigen::VectorXd exponent(cols_);
  for (std::size_t n = 0; n < count; ++n) {
    const auto z = nodes_[first + n].z;
    for (Eigen::Index k = 0; k < rows_; ++k) {
      for (Eigen::Index j = 0; j < cols_; ++j) exponent[j] = std::norm(shifts_(k, j) + z) / sigma_sq_;
      const double lowest = exponent.minCoeff();
      const Eigen::Index row = static_cast<Eigen::Index>(n) * rows_ + k;
      base[row] = lowest;
      for (Eigen::Index j = 0; j < cols_; ++j) block(row, j) = std::exp(lowest - exponent[j]);
    }
  }
}

template <typename Fn>
void MixtureExpectation::for_each_block(Fn&& fn) const {
  if (!cached_blocks_.empty()) {
    std::size_t first = 0;
    for (std::size_t b = 0; b < cached_blocks_.size(); ++b) {
      const auto count = static_cast<std::size_t>(cached_blocks_[b].rows() / rows_);
      fn(first, count, cached_blocks_[b], cached_base_[b]);
      first += count;
    }
    return;
  }
  Eigen::MatrixXd block;
  Eigen::VectorXd base;
  for (std::size_t first = 0; first < nodes_.size(); first += block_nodes_) {
    const std::size_t count = std::min(block_nodes_, nodes_.size() - first);
    fill_block(first, count, block, base);
    fn(first, count, block, base);
  }
}

Eigen::VectorXd MixtureExpectation::row_log_means(const Eigen::VectorXd& p) const {
  if (p.size() != cols_) throw Error("probability vector size does not match the kernel");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(rows_);
  for_each_block([&](std::size_t first, std::size_t count, const Eigen::MatrixXd& block,
                     const Eigen::VectorXd& base) {
    const Eigen::VectorXd sums = block * p;
    for (std::size_t n = 0; n < count; ++n) {
      const double w = nodes_[first + n].weight;
      for (Eigen::Index k = 0; k < rows_; ++k) {
        const Eigen::Index row = static_cast<Eigen::Index>(n) * rows_ + k;
        out[k] += w * (std::log2(std::max(sums[row], kMixtureFloor)) - base[row] * kInvLn2);
      }
    }
  });
  if (!out.allFinite()) throw NumericalError("mixture expectation is not finite");
  return out;
}

double MixtureExpectation::weighted_log_mean(const Eigen::VectorXd& a, const Eigen::VectorXd& p,
                                             Eigen::VectorXd* grad) const {
  if (p.size() != cols_ || a.size() != rows_) throw Error("vector sizes do not match the kernel");
  double value = 0.0;
  if (grad) grad->setZero(cols_);
  Eigen::VectorXd coeff;
  for_each_block([&](std::size_t first, std::size_t count, const Eigen::MatrixXd& block,
                     const Eigen::VectorXd& base) {
    const Eigen::VectorXd sums = block * p;
    coeff.setZero(sums.size());
    for (std::size_t n = 0; n < count; ++n) {
      const double w = nodes_[first + n].weight;
      for (Eigen::Index k = 0; k < rows_; ++k) {
        if (a[k] == 0.0) continue;
        const Eigen::Index row = static_cast<Eigen::Index>(n) * rows_ + k;
        const double s = std::max(sums[row], kMixtureFloor);
        value += w * a[k] * (std::log2(s) - base[row] * kInvLn2);
        coeff[row] = w * a[k] * kInvLn2 / s;
      }
    }
    if (grad) grad->noalias() += block.transpose() * coeff;
  });
  if (!std::isfinite(value) || (grad && !grad->allFinite()))
    throw NumericalError("mixture expectation is not finite");
  return value;
}

// MetricContext ------------------------------------------------------------------

MetricContext::MetricContext(ConstellationSet set, double power_cap, ChannelRealization ch, NoiseModel noise,
                             QuadratureConfig quad)
    : set_(std::move(set)), power_cap_(power_cap), ch_(ch), noise_(noise), quad_(quad) {
  quad_.validate();
  if (!(power_cap_ >= 0.0) || !std::isfinite(power_cap_)) throw Error("power cap must be nonnegative");
  if (!std::isfinite(std::abs(ch_.g_b)) || !std::isfinite(std::abs(ch_.g_w)))
    throw Error("channel gains must be finite");

  auto caches = std::make_shared<Caches>();
  caches->kernels = Kernels::build(set_, ch_, noise_);

  const double gb = std::abs(ch_.g_b);
  const double gw = std::abs(ch_.g_w);
  const auto K = static_cast<Eigen::Index>(set_.size());

  const Eigen::MatrixXcd bob_shifts = pairwise_shifts(set_, gb);
  caches->bob_objective = std::make_shared<MixtureExpectation>(
      bob_shifts, noise_.sigma_b_sq(), gaussian_nodes(noise_.sigma_b_sq(), quad_, IntegralRole::objective));
  const bool same_nodes = quad_.scheme != QuadratureScheme::truncated_box || quad_.tau1 == quad_.tau2;
  caches->bob_gradient =
      same_nodes ? caches->bob_objective
                 : std::make_shared<MixtureExpectation>(
                       bob_shifts, noise_.sigma_b_sq(),
                       gaussian_nodes(noise_.sigma_b_sq(), quad_, IntegralRole::gradient));

  // H0: y = z, so log2 p1/p0 at y = z involves shifts -mu_j.
  auto willie_nodes = gaussian_nodes(noise_.sigma_w_sq(), quad_, IntegralRole::objective);
  Eigen::MatrixXcd h0_shifts(1, K);
  for (Eigen::Index j = 0; j < K; ++j) h0_shifts(0, j) = -gw * set_[static_cast<std::size_t>(j)];
  caches->willie_h0 = std::make_shared<MixtureExpectation>(h0_shifts, noise_.sigma_w_sq(), willie_nodes);
  caches->willie_h1 =
      std::make_shared<MixtureExpectation>(pairwise_shifts(set_, gw), noise_.sigma_w_sq(), willie_nodes);

  caches->willie_h1_energy.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const cplx mu = gw * set_[static_cast<std::size_t>(k)];
    double e = 0.0;
    for (const auto& node : willie_nodes) e += node.weight * std::norm(mu + node.z);
    caches->willie_h1_energy[k] = e / noise_.sigma_w_sq();
  }
  caches_ = std::move(caches);
}

// Metrics ------------------------------------------------------------------------

double exact_objective(const MetricContext& ctx, const Eigen::VectorXd& p) {
  return ctx.bob_objective().weighted_log_mean(p, p, nullptr);
}

Eigen::VectorXd exact_objective_gradient(const MetricContext& ctx, const Eigen::VectorXd& p) {
  const auto& mix = ctx.bob_gradient();
  Eigen::VectorXd cross;
  mix.weighted_log_mean(p, p, &cross);
  return mix.row_log_means(p) + cross;
}

double rate_exact(const MetricContext& ctx, const Eigen::VectorXd& p) {
  return -exact_objective(ctx, p) - kInvLn2;
}

double log_kernel_form(const Eigen::MatrixXd& S, const Eigen::VectorXd& p) {
  const Eigen::VectorXd m = S * p;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    if (p[k] != 0.0) acc += p[k] * std::log2(std::max(m[k], kMixtureFloor));
  return acc;
}

Eigen::VectorXd log_kernel_form_gradient(const Eigen::MatrixXd& S, const Eigen::VectorXd& p) {
  const Eigen::VectorXd m = S * p;
  Eigen::VectorXd ratio(p.size());
  Eigen::VectorXd logs(p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double mk = std::max(m[k], kMixtureFloor);
    ratio[k] = p[k] / mk;
    logs[k] = std::log2(mk);
  }
  return logs + S.transpose() * ratio * kInvLn2;
}

double rate_upper(const MetricContext& ctx, const Eigen::VectorXd& p) {
  return -log_kernel_form(ctx.kernels().r, p);
}

double rate_lower(const MetricContext& ctx, const Eigen::VectorXd& p) {
  return -log_kernel_form(ctx.kernels().s_b, p) - kInvLn2 + 1.0;
}

double kl_h0_h1_exact(const MetricContext& ctx, const Eigen::VectorXd& p) {
  // -1/ln2 - E{log2 sum_k p_k exp(-|z - mu_k|^2 / sigma_w^2)}, z ~ CN(0, sigma_w^2).
  return -kInvLn2 - ctx.willie_h0().row_log_means(p)[0];
}

double kl_h1_h0_exact(const MetricContext& ctx, const Eigen::VectorXd& p) {
  // For y = mu_k + z: log2(p1/p0)(y) = log2 sum_j p_j exp(-|mu_k - mu_j + z|^2/s^2)
  //                                    + |mu_k + z|^2 / (s^2 ln2).
  const Eigen::VectorXd logs = ctx.willie_h1().row_log_means(p);
  return p.dot(logs + ctx.willie_h1_energy() * kInvLn2);
}

double kl_h0_h1_upper(const MetricContext& ctx, const Eigen::VectorXd& p) {
  return -std::log2(std::max(p.dot(ctx.kernels().t), kMixtureFloor));
}

double kl_h1_h0_upper_constant(const MetricContext& ctx) {
  return kInvLn2 + std::norm(ctx.channel().g_w) * ctx.power_cap() / (ctx.noise().sigma_w_sq() * kLn2) - 1.0;
}

double kl_h1_h0_upper(const MetricContext& ctx, const Eigen::VectorXd& p) {
  return log_kernel_form(ctx.kernels().s_w, p) + kl_h1_h0_upper_constant(ctx);
}

AffineForm linearize_kl_upper(const MetricContext& ctx, const Eigen::VectorXd& p_bar) {
  AffineForm form;
  form.anchor = p_bar;
  form.anchor_value = log_kernel_form(ctx.kernels().s_w, p_bar);
  form.slope = log_kernel_form_gradient(ctx.kernels().s_w, p_bar);
  return form;
}

}  // namespace cshape
