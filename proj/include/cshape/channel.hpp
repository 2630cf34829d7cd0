#pragma once

#include <complex>
#include <cstdint>

#include <json.hpp>

namespace cshape {

/// Flat-fading gains Alice->Bob (g_b) and Alice->Willie (g_w) for one block.
struct ChannelRealization {
  std::complex<double> g_b;
  std::complex<double> g_w;
};

/// Receiver noise variances (watts).
class NoiseModel {
 public:
  NoiseModel(double sigma_b_sq, double sigma_w_sq);
  double sigma_b_sq() const { return sigma_b_sq_; }
  double sigma_w_sq() const { return sigma_w_sq_; }

 private:
  double sigma_b_sq_;
  double sigma_w_sq_;
};

/// Rayleigh standard deviations: g_b ~ CN(0, sigma1^2), g_w ~ CN(0, sigma2^2).
/// Zero is accepted and yields a zero gain.
struct FadingSpec {
  double sigma1 = 1.0;
  double sigma2 = 1.0;
};

/// Deterministic in `seed` (SplitMix64 + Box-Muller).
ChannelRealization sample_rayleigh(const FadingSpec& spec, std::uint64_t seed);

/// Bob's noise variance for a given SNR: P_A * 10^(-snr_db / 10).
double sigma_b_from_snr(double power_cap, double snr_db);

void to_json(nlohmann::json& j, const ChannelRealization& ch);
void from_json(const nlohmann::json& j, ChannelRealization& ch);

}  // namespace cshape
