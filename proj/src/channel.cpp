#include "cshape/channel.hpp"

#include <cmath>

#include "cshape/error.hpp"
#include "cshape/rng.hpp"

namespace cshape {

NoiseModel::NoiseModel(double sigma_b_sq, double sigma_w_sq)
    : sigma_b_sq_(sigma_b_sq), sigma_w_sq_(sigma_w_sq) {
  if (!(sigma_b_sq > 0.0) || !std::isfinite(sigma_b_sq)) throw Error("sigma_b_sq must be positive");
  if (!(sigma_w_sq > 0.0) || !std::isfinite(sigma_w_sq)) throw Error("sigma_w_sq must be positive");
}

ChannelRealization sample_rayleigh(const FadingSpec& spec, std::uint64_t seed) {
  if (!(spec.sigma1 >= 0.0) || !(spec.sigma2 >= 0.0)) throw Error("fading standard deviations must be nonnegative");
  SplitMix64 rng(seed);
  const double a = rng.normal(), b = rng.normal(), c = rng.normal(), d = rng.normal();
  const double s = std::sqrt(0.5);
  return {{spec.sigma1 * s * a, spec.sigma1 * s * b}, {spec.sigma2 * s * c, spec.sigma2 * s * d}};
}

double sigma_b_from_snr(double power_cap, double snr_db) {
  if (!(power_cap > 0.0)) throw Error("power cap must be positive");
  return power_cap * std::pow(10.0, -snr_db / 10.0);
}

void to_json(nlohmann::json& j, const ChannelRealization& ch) {
  j = {{"g_b", {ch.g_b.real(), ch.g_b.imag()}}, {"g_w", {ch.g_w.real(), ch.g_w.imag()}}};
}

void from_json(const nlohmann::json& j, ChannelRealization& ch) {
  auto read = [&](const char* key) {
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw Error(std::string("channel key '") + key + "' must be [re, im]");
    return std::complex<double>(v[0].get<double>(), v[1].get<double>());
  };
  ch.g_b = read("g_b");
  ch.g_w = read("g_w");
}

}  // namespace cshape
