#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace blockmerge {

inline constexpr double kNoiseFloor = 1e-6;
inline constexpr double kMinLengthScale = 1e-3;
inline constexpr double kMaxLengthScale = 1e3;

/// Constant-mean GP hyperparameters. Stored in the standardized target units
/// of the model that owns them.
struct GPHyperparams {
  double mean = 0.0;
  double signal_variance = 1.0;
  double noise_variance = 1e-2;
  std::vector<double> length_scales;

  /// mean 0, signal 1, noise 1e-2, length scales 0.5*sqrt(D).
  static GPHyperparams defaults(int dimension);
};

/// Matern-5/2 kernel with one length scale per input dimension.
double matern52_ard(std::span<const double> x, std::span<const double> x2, const GPHyperparams& hyper);

/// Gram matrix k(A_i, B_j).
Eigen::MatrixXd matern52_gram(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const GPHyperparams& hyper);

/// Log marginal likelihood of targets y under the hyperparameters, including
/// the -N/2 log(2 pi) term. Returns -inf when the covariance is not positive
/// definite.
double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GPHyperparams& hyper);

/// Hyperparameters as the unconstrained vector
/// [mean, log signal, log noise, log l_1..l_D] used by the optimizer.
Eigen::VectorXd pack_hyperparams(const GPHyperparams& hyper);
GPHyperparams unpack_hyperparams(const Eigen::VectorXd& theta);

/// MLL and its analytic gradient with respect to pack_hyperparams(hyper).
double log_marginal_likelihood_with_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                             const Eigen::VectorXd& theta, Eigen::VectorXd& gradient);

struct GPFitOptions {
  int restarts = 8;
  int max_iterations = 200;
  std::uint64_t seed = 0;
  /// Optional extra starting point (e.g. the previous iteration's fit).
  const GPHyperparams* warm_start = nullptr;
};

/// Conditioned GP. Targets are standardized internally; predictions come
/// back in the original units.
struct GPModel {
  GPHyperparams hyper;
  Eigen::MatrixXd train_X;
  Eigen::VectorXd train_y;  // standardized
  double y_shift = 0.0;
  double y_scale = 1.0;
  Eigen::MatrixXd chol;     // lower factor of K + noise I
  Eigen::VectorXd alpha;    // (K + noise I)^-1 (y - mean)
  double mll = 0.0;         // at hyper, standardized units
  double initial_mll = 0.0; // at GPHyperparams::defaults

  int dimension() const noexcept { return static_cast<int>(train_X.cols()); }
};

/// Conditions on (X, y) with fixed hyperparameters given in standardized units.
GPModel condition_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GPHyperparams& hyper);

/// Multi-start quasi-Newton maximization of the MLL in log space, then
/// conditioning. Never returns a model with MLL below the default start.
GPModel fit_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GPFitOptions& options = {});

struct Posterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Latent-function posterior at the rows of Xq, in original units. The
/// covariance is symmetrized and, when `clamp_psd` is set, projected onto
/// the PSD cone by eigenvalue clamping.
Posterior gp_posterior(const GPModel& model, const Eigen::MatrixXd& Xq, bool clamp_psd = true);

nlohmann::ordered_json hyperparams_to_json(const GPModel& model);

}  // namespace blockmerge
