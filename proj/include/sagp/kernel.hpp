#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace sagp {

/// Squared-exponential latent covariance with unit signal variance.
struct LatentKernel {
  double beta = 1.0;
  static constexpr double alpha2 = 1.0;
};

/// White-noise process amplitudes lambda_s (covariance lambda_s^2 per grid
/// point) and observation noise variances sigma_s^2.
struct NoiseSpec {
  Eigen::VectorXd lambda;
  Eigen::VectorXd sigma2;
};

struct HyperParams {
  Eigen::MatrixXd weights;  // S x L mixing matrix W
  std::vector<LatentKernel> kernels;
  NoiseSpec noise;

  int num_datasets() const { return static_cast<int>(weights.rows()); }
  int num_latents() const { return static_cast<int>(weights.cols()); }

  void validate() const;

  static HyperParams zeros(int S, int L, double beta = 1.0);
};

/// gamma_l(d2) = exp(-d2 / (2 beta^2)).
double gamma(const LatentKernel& kernel, double d2);

/// k_{s,s2} at squared distance d2. The white-noise term lambda_s^2 is added
/// only when s == s2 and both arguments are the same grid point.
double cross_cov(int s, int s2, double d2, bool same_point, const HyperParams& params);

/// Unconstrained parameterization used by the optimizer:
///   [W row-major (S*L)] [log beta (L)] [log lambda (S)] [log sigma (S)]
/// where sigma = sqrt(sigma2).
struct ParamLayout {
  int S = 0;
  int L = 0;

  int size() const { return S * L + L + 2 * S; }
  int weight(int s, int l) const { return s * L + l; }
  int log_beta(int l) const { return S * L + l; }
  int log_lambda(int s) const { return S * L + L + s; }
  int log_sigma(int s) const { return S * L + L + S + s; }
};

Eigen::VectorXd pack(const HyperParams& params);
HyperParams unpack(const Eigen::VectorXd& theta, const ParamLayout& layout);

/// Flat text form: one `key = value` per line in the order W[s][l], beta[l],
/// lambda[s], sigma2[s]; values printed with 17 significant digits.
std::string format_hyperparams(const HyperParams& params);
HyperParams parse_hyperparams(const std::string& text);

}  // namespace sagp
