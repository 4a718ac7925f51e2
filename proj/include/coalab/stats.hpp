#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>

namespace coalab {

/// Input with no spread where a spread is required (constant regressor, constant predictor).
class ZeroVarianceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// rho_peak <= rho_ave: no sample count reaches the requested success probability.
class UnattainableError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

template <class Scalar>
struct RegressionFitT {
  Scalar beta1{};
  Scalar beta0{};
  Scalar sigma_eps_sq{};  // residual mean square, divisor m
  Scalar r_squared{};
  Eigen::Index n_points = 0;
};
using RegressionFit = RegressionFitT<double>;

/// Least squares y = beta1 * x + beta0. Throws ZeroVarianceError for constant x.
template <class DX, class DY>
RegressionFitT<typename DX::Scalar> fit_linear(const Eigen::MatrixBase<DX>& x,
                                               const Eigen::MatrixBase<DY>& y) {
  using S = typename DX::Scalar;
  const Eigen::Index m = x.size();
  if (m < 2 || y.size() != m) throw std::invalid_argument("fit_linear: need >= 2 paired points");
  const S mx = x.mean();
  const S my = y.mean();
  const auto dx = (x.array() - mx).eval();
  const auto dy = (y.array() - my).eval();
  const S sxx = (dx * dx).sum();
  if (sxx == S(0)) throw ZeroVarianceError("fit_linear: x is constant");
  const S sxy = (dx * dy).sum();
  const S syy = (dy * dy).sum();

  RegressionFitT<S> f;
  f.n_points = m;
  f.beta1 = sxy / sxx;
  f.beta0 = my - f.beta1 * mx;
  const auto resid = (y.array() - (f.beta1 * x.array() + f.beta0)).eval();
  f.sigma_eps_sq = (resid * resid).sum() / S(m);
  f.r_squared = syy == S(0) ? S(1) : S(1) - (resid * resid).sum() / syy;
  return f;
}

RegressionFit fit_linear(std::span<const double> x, std::span<const double> y);

/// Population variance (divisor m), matching the residual convention above.
template <class D>
typename D::Scalar population_variance(const Eigen::MatrixBase<D>& v) {
  using S = typename D::Scalar;
  if (v.size() == 0) throw std::invalid_argument("variance: empty input");
  return (v.array() - v.mean()).square().sum() / S(v.size());
}

struct SnrEstimate {
  double snr = 0.0;
  double sigma_n_sq = 0.0;
  bool noiseless = false;  // sigma_eps_sq == 0, snr is +inf
  RegressionFit fit;
};

/// beta1^2 * sigma_n^2 / sigma_eps^2.
SnrEstimate snr(const RegressionFit& fit, double sigma_n_sq);

/// Standard normal CDF.
double normal_cdf(double x);

/// Probability that the correct guess stands out after S samples.
double success_probability(double rho_peak, double rho_ave, double samples);

/// Smallest integer S with success_probability >= alpha.
std::uint64_t samples_required(double rho_peak, double rho_ave, double alpha);

/// Correlation after additive noise at the given SNR.
double attenuate_hw(double rho_ideal, double snr_value);

struct AttenuationInputs {
  double rho_tn = 0.0;
  double p_match = 1.0;
  double sigma_n = 1.0;
  double sigma_o = 1.0;

  void validate() const;
};

/// Correlation seen through a layout the attacker does not know.
double attenuate_sw(const AttenuationInputs& in);

double combined_gain(double g_hw, double g_sw);

/// Cohen's kappa between two integer labelings: agreement beyond what independent
/// labelings with the same marginals would produce.
double chance_corrected_agreement(std::span<const std::int32_t> a, std::span<const std::int32_t> b);

}  // namespace coalab
