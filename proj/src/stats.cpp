#include "coalab/stats.hpp"

#include <map>

namespace coalab {

RegressionFit fit_linear(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_linear: length mismatch");
  const Eigen::Map<const Eigen::VectorXd> xm(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::Map<const Eigen::VectorXd> ym(y.data(), static_cast<Eigen::Index>(y.size()));
  return fit_linear(xm, ym);
}

SnrEstimate snr(const RegressionFit& fit, double sigma_n_sq) {
  if (!(sigma_n_sq >= 0.0)) throw std::invalid_argument("snr: negative signal variance");
  SnrEstimate s;
  s.fit = fit;
  s.sigma_n_sq = sigma_n_sq;
  if (fit.sigma_eps_sq <= 0.0) {
    s.noiseless = true;
    s.snr = std::numeric_limits<double>::infinity();
    return s;
  }
  s.snr = fit.beta1 * fit.beta1 * sigma_n_sq / fit.sigma_eps_sq;
  return s;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double success_probability(double rho_peak, double rho_ave, double samples) {
  if (!(samples > 3.0)) throw std::domain_error("success_probability: need S > 3");
  if (!(std::abs(rho_peak) < 1.0) || !(std::abs(rho_ave) < 1.0)) {
    throw std::domain_error("success_probability: correlations must lie in (-1, 1)");
  }
  const double z = (std::atanh(rho_peak) - std::atanh(rho_ave)) / std::sqrt(2.0 / (samples - 3.0));
  return normal_cdf(z);
}

std::uint64_t samples_required(double rho_peak, double rho_ave, double alpha) {
  if (!(alpha > 0.5 && alpha < 1.0)) throw std::domain_error("samples_required: need 0.5 < alpha < 1");
  if (!(std::abs(rho_peak) < 1.0) || !(std::abs(rho_ave) < 1.0)) {
    throw std::domain_error("samples_required: correlations must lie in (-1, 1)");
  }
  if (!(rho_peak > rho_ave)) {
    throw UnattainableError("samples_required: rho_peak must exceed rho_ave");
  }
  std::uint64_t lo = 3;  // success_probability is undefined here; treat as failing
  std::uint64_t hi = 4;
  while (success_probability(rho_peak, rho_ave, static_cast<double>(hi)) < alpha) {
    lo = hi;
    if (hi > (std::uint64_t{1} << 62)) throw UnattainableError("samples_required: overflow");
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    if (success_probability(rho_peak, rho_ave, static_cast<double>(mid)) >= alpha) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

double attenuate_hw(double rho_ideal, double snr_value) {
  if (!(snr_value > 0.0)) throw std::domain_error("attenuate_hw: snr must be positive");
  if (std::isinf(snr_value)) return rho_ideal;
  return rho_ideal / std::sqrt(1.0 + 1.0 / snr_value);
}

void AttenuationInputs::validate() const {
  if (!std::isfinite(rho_tn) || !std::isfinite(p_match) || !std::isfinite(sigma_n) ||
      !std::isfinite(sigma_o)) {
    throw std::invalid_argument("attenuation: inputs must be finite");
  }
  if (p_match < 0.0 || p_match > 1.0) throw std::invalid_argument("attenuation: p_match in [0,1]");
  if (!(sigma_n > 0.0) || !(sigma_o > 0.0)) {
    throw std::invalid_argument("attenuation: sigmas must be positive");
  }
}

double attenuate_sw(const AttenuationInputs& in) {
  in.validate();
  return in.rho_tn * in.p_match * in.sigma_n / in.sigma_o;
}

double combined_gain(double g_hw, double g_sw) {
  if (!(g_hw >= 1.0) || !(g_sw >= 1.0)) throw std::invalid_argument("combined_gain: gains must be >= 1");
  return g_hw * g_sw;
}

double chance_corrected_agreement(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("agreement: need equal, non-empty labelings");
  }
  std::map<std::int32_t, std::pair<double, double>> marginals;
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    agree += a[i] == b[i] ? 1.0 : 0.0;
    marginals[a[i]].first += 1.0;
    marginals[b[i]].second += 1.0;
  }
  const double m = static_cast<double>(a.size());
  double chance = 0.0;
  for (const auto& [label, counts] : marginals) chance += (counts.first / m) * (counts.second / m);
  const double observed = agree / m;
  if (chance >= 1.0) return 1.0;
  return (observed - chance) / (1.0 - chance);
}

}  // namespace coalab
