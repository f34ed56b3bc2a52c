#include "blockmerge/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "blockmerge/errors.hpp"

namespace blockmerge {

namespace {

constexpr double kSqrt5 = 2.2360679774997896964;
constexpr double kLog2Pi = 1.8378770664093454836;

// Bounds on the packed parameter vector.
constexpr double kMeanBound = 10.0;
const double kLogSignalLo = std::log(1e-4);
const double kLogSignalHi = std::log(1e4);
const double kLogNoiseLo = std::log(kNoiseFloor);
const double kLogNoiseHi = std::log(10.0);
const double kLogLengthLo = std::log(kMinLengthScale);
const double kLogLengthHi = std::log(kMaxLengthScale);

double matern_from_r(double r, double signal) {
  const double s = kSqrt5 * r;
  return signal * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

bool cholesky_with_jitter(Eigen::MatrixXd A, Eigen::MatrixXd& L) {
  const double scale = std::max(1e-12, A.diagonal().cwiseAbs().maxCoeff());
  double jitter = 0.0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    if (jitter > 0.0) A.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() == Eigen::Success) {
      L = llt.matrixL();
      return true;
    }
    const double next = jitter == 0.0 ? 1e-10 * scale : jitter * 10.0;
    A.diagonal().array() -= jitter;
    jitter = next;
  }
  return false;
}

// Pairwise squared coordinate differences, one N x N matrix per dimension.
struct MllProblem {
  const Eigen::MatrixXd& X;
  const Eigen::VectorXd& y;
  std::vector<Eigen::MatrixXd> sq_diff;

  MllProblem(const Eigen::MatrixXd& X_, const Eigen::VectorXd& y_) : X(X_), y(y_) {
    const auto n = X.rows();
    sq_diff.resize(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index d = 0; d < X.cols(); ++d) {
      Eigen::MatrixXd m(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
          const double diff = X(i, d) - X(j, d);
          m(i, j) = diff * diff;
        }
      }
      sq_diff[static_cast<std::size_t>(d)] = std::move(m);
    }
  }

  // Returns -inf for non-PD covariance. Fills gradient when requested.
  double evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* gradient) const {
    const auto n = X.rows();
    const auto D = X.cols();
    const double mean = theta(0);
    const double signal = std::exp(theta(1));
    const double noise = std::exp(theta(2));

    Eigen::MatrixXd r2 = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index d = 0; d < D; ++d) {
      const double inv = std::exp(-2.0 * theta(3 + d));
      r2.noalias() += inv * sq_diff[static_cast<std::size_t>(d)];
    }
    const Eigen::ArrayXXd sr = kSqrt5 * r2.array().sqrt();
    const Eigen::ArrayXXd e = (-sr).exp();
    const Eigen::MatrixXd Kf = (signal * (1.0 + sr + sr.square() / 3.0) * e).matrix();
    Eigen::MatrixXd Ky = Kf;
    Ky.diagonal().array() += noise;
    Eigen::LLT<Eigen::MatrixXd> llt(Ky);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();

    const Eigen::VectorXd resid = y.array() - mean;
    const Eigen::VectorXd alpha = llt.solve(resid);
    const Eigen::MatrixXd L = llt.matrixL();
    const double log_det = 2.0 * L.diagonal().array().log().sum();
    const double mll = -0.5 * resid.dot(alpha) - 0.5 * log_det - 0.5 * static_cast<double>(n) * kLog2Pi;
    if (!std::isfinite(mll)) return -std::numeric_limits<double>::infinity();

    if (gradient) {
      const Eigen::MatrixXd Kinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
      const Eigen::MatrixXd W = alpha * alpha.transpose() - Kinv;
      gradient->resize(theta.size());
      (*gradient)(0) = alpha.sum();
      (*gradient)(1) = 0.5 * (W.array() * Kf.array()).sum();
      (*gradient)(2) = 0.5 * noise * W.trace();
      // dk/d(log l_d) = signal * 5/3 (1 + sqrt5 r) exp(-sqrt5 r) * (x_d - x'_d)^2 / l_d^2
      const Eigen::MatrixXd Wc = (W.array() * (signal * (5.0 / 3.0) * (1.0 + sr) * e)).matrix();
      for (Eigen::Index d = 0; d < D; ++d) {
        const double inv = std::exp(-2.0 * theta(3 + d));
        (*gradient)(3 + d) = 0.5 * inv * (Wc.array() * sq_diff[static_cast<std::size_t>(d)].array()).sum();
      }
    }
    return mll;
  }
};

Eigen::VectorXd lower_bounds(Eigen::Index D) {
  Eigen::VectorXd lo(3 + D);
  lo(0) = -kMeanBound;
  lo(1) = kLogSignalLo;
  lo(2) = kLogNoiseLo;
  lo.tail(D).setConstant(kLogLengthLo);
  return lo;
}

Eigen::VectorXd upper_bounds(Eigen::Index D) {
  Eigen::VectorXd hi(3 + D);
  hi(0) = kMeanBound;
  hi(1) = kLogSignalHi;
  hi(2) = kLogNoiseHi;
  hi.tail(D).setConstant(kLogLengthHi);
  return hi;
}

// Projected BFGS ascent with Armijo backtracking. Only ever accepts steps
// that increase the objective, so the result is no worse than the start.
Eigen::VectorXd ascend(const MllProblem& problem, Eigen::VectorXd theta, int max_iterations, double& best) {
  const auto P = theta.size();
  const Eigen::VectorXd lo = lower_bounds(P - 3);
  const Eigen::VectorXd hi = upper_bounds(P - 3);
  theta = theta.cwiseMax(lo).cwiseMin(hi);

  Eigen::VectorXd g;
  double f = problem.evaluate(theta, &g);
  best = f;
  if (!std::isfinite(f)) return theta;
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(P, P);  // inverse Hessian of -f
  bool fresh = true;

  for (int it = 0; it < max_iterations; ++it) {
    // gradient components pushing against an active bound are frozen
    Eigen::VectorXd g_free = g;
    for (Eigen::Index i = 0; i < P; ++i) {
      if ((theta(i) <= lo(i) && g(i) < 0) || (theta(i) >= hi(i) && g(i) > 0)) g_free(i) = 0.0;
    }
    if (g_free.lpNorm<Eigen::Infinity>() < 1e-7) break;

    Eigen::VectorXd dir = H * g_free;
    if (dir.dot(g_free) <= 0.0) {
      H.setIdentity();
      fresh = true;
      dir = g_free;
    }
    const double cap = fresh ? 0.5 : 2.0;
    const double max_step = dir.lpNorm<Eigen::Infinity>();
    if (max_step > cap) dir *= cap / max_step;

    double t = 1.0;
    Eigen::VectorXd next;
    Eigen::VectorXd g_next;
    double f_next = -std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      next = (theta + t * dir).cwiseMax(lo).cwiseMin(hi);
      f_next = problem.evaluate(next, nullptr);
      if (std::isfinite(f_next) && f_next >= f + 1e-4 * g_free.dot(next - theta) && f_next > f) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (fresh) break;
      H.setIdentity();
      fresh = true;
      continue;
    }
    problem.evaluate(next, &g_next);
    const Eigen::VectorXd s = next - theta;
    const Eigen::VectorXd yv = g - g_next;  // gradient change of -f
    const double sy = s.dot(yv);
    if (sy > 1e-12) {
      if (fresh) H *= sy / yv.squaredNorm();
      fresh = false;
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(P, P);
      H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) + rho * s * s.transpose();
    }
    const double improvement = f_next - f;
    theta = next;
    f = f_next;
    g = g_next;
    if (improvement < 1e-10 * (1.0 + std::abs(f))) break;
  }
  best = f;
  return theta;
}

}  // namespace

GPHyperparams GPHyperparams::defaults(int dimension) {
  GPHyperparams h;
  const double ell = std::clamp(0.5 * std::sqrt(static_cast<double>(dimension)), kMinLengthScale, kMaxLengthScale);
  h.length_scales.assign(static_cast<std::size_t>(dimension), ell);
  return h;
}

double matern52_ard(std::span<const double> x, std::span<const double> x2, const GPHyperparams& hyper) {
  if (x.size() != x2.size() || x.size() != hyper.length_scales.size()) {
    throw DimensionError("kernel inputs and length scales must share one dimension");
  }
  double r2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double ell = hyper.length_scales[i];
    if (!(ell > 0.0)) throw DomainError("length scales must be positive");
    const double z = (x[i] - x2[i]) / ell;
    r2 += z * z;
  }
  return matern_from_r(std::sqrt(r2), hyper.signal_variance);
}

Eigen::MatrixXd matern52_gram(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const GPHyperparams& hyper) {
  const auto D = A.cols();
  if (B.cols() != D || static_cast<Eigen::Index>(hyper.length_scales.size()) != D) {
    throw DimensionError("gram inputs and length scales must share one dimension");
  }
  Eigen::RowVectorXd inv(D);
  for (Eigen::Index d = 0; d < D; ++d) {
    const double ell = hyper.length_scales[static_cast<std::size_t>(d)];
    if (!(ell > 0.0)) throw DomainError("length scales must be positive");
    inv(d) = 1.0 / ell;
  }
  const Eigen::MatrixXd As = A.array().rowwise() * inv.array();
  const Eigen::MatrixXd Bs = B.array().rowwise() * inv.array();
  Eigen::MatrixXd K(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      K(i, j) = matern_from_r((As.row(i) - Bs.row(j)).norm(), hyper.signal_variance);
    }
  }
  return K;
}

Eigen::VectorXd pack_hyperparams(const GPHyperparams& hyper) {
  const auto D = static_cast<Eigen::Index>(hyper.length_scales.size());
  Eigen::VectorXd theta(3 + D);
  theta(0) = hyper.mean;
  theta(1) = std::log(hyper.signal_variance);
  theta(2) = std::log(hyper.noise_variance);
  for (Eigen::Index d = 0; d < D; ++d) theta(3 + d) = std::log(hyper.length_scales[static_cast<std::size_t>(d)]);
  return theta;
}

GPHyperparams unpack_hyperparams(const Eigen::VectorXd& theta) {
  GPHyperparams h;
  h.mean = theta(0);
  h.signal_variance = std::exp(theta(1));
  h.noise_variance = std::exp(theta(2));
  h.length_scales.resize(static_cast<std::size_t>(theta.size() - 3));
  for (Eigen::Index d = 3; d < theta.size(); ++d) h.length_scales[static_cast<std::size_t>(d - 3)] = std::exp(theta(d));
  return h;
}

double log_marginal_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GPHyperparams& hyper) {
  if (static_cast<Eigen::Index>(hyper.length_scales.size()) != X.cols()) {
    throw DimensionError("length scale count must match the input dimension");
  }
  return MllProblem(X, y).evaluate(pack_hyperparams(hyper), nullptr);
}

double log_marginal_likelihood_with_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                             const Eigen::VectorXd& theta, Eigen::VectorXd& gradient) {
  if (theta.size() != X.cols() + 3) throw DimensionError("parameter vector must have D + 3 entries");
  return MllProblem(X, y).evaluate(theta, &gradient);
}

GPModel condition_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GPHyperparams& hyper) {
  if (X.rows() < 1 || X.rows() != y.size()) throw ArityError("training inputs and targets disagree in count");
  if (static_cast<Eigen::Index>(hyper.length_scales.size()) != X.cols()) {
    throw DimensionError("length scale count must match the input dimension");
  }
  GPModel m;
  m.hyper = hyper;
  m.hyper.noise_variance = std::max(hyper.noise_variance, kNoiseFloor);
  m.train_X = X;
  m.y_shift = y.mean();
  const double var = (y.array() - m.y_shift).square().mean();
  m.y_scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  m.train_y = (y.array() - m.y_shift) / m.y_scale;

  Eigen::MatrixXd Ky = matern52_gram(X, X, m.hyper);
  Ky.diagonal().array() += m.hyper.noise_variance;
  if (!cholesky_with_jitter(Ky, m.chol)) throw NumericalError("training covariance is not positive definite");
  const Eigen::VectorXd resid = m.train_y.array() - m.hyper.mean;
  m.alpha = m.chol.transpose().triangularView<Eigen::Upper>().solve(m.chol.triangularView<Eigen::Lower>().solve(resid));
  m.mll = -0.5 * resid.dot(m.alpha) - m.chol.diagonal().array().log().sum() -
          0.5 * static_cast<double>(X.rows()) * kLog2Pi;
  return m;
}

GPModel fit_gp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GPFitOptions& options) {
  if (X.rows() < 2) throw ArityError("a GP fit needs at least two observations");
  if (X.rows() != y.size()) throw ArityError("training inputs and targets disagree in count");
  const auto D = X.cols();

  const double shift = y.mean();
  const double var = (y.array() - shift).square().mean();
  const double scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd ys = (y.array() - shift) / scale;
  const MllProblem problem(X, ys);

  const GPHyperparams init = GPHyperparams::defaults(static_cast<int>(D));
  const double initial_mll = problem.evaluate(pack_hyperparams(init), nullptr);

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(pack_hyperparams(init));
  if (options.warm_start && static_cast<Eigen::Index>(options.warm_start->length_scales.size()) == D) {
    starts.push_back(pack_hyperparams(*options.warm_start));
  }
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (static_cast<int>(starts.size()) < std::max(1, options.restarts)) {
    Eigen::VectorXd theta(3 + D);
    theta(0) = 0.0;
    theta(1) = std::log(0.1) + unit(rng) * std::log(100.0);
    theta(2) = std::log(1e-5) + unit(rng) * std::log(1e4);
    for (Eigen::Index d = 0; d < D; ++d) theta(3 + d) = std::log(0.05) + unit(rng) * std::log(100.0);
    starts.push_back(theta);
  }

  Eigen::VectorXd best_theta = starts.front();
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& start : starts) {
    double value = 0.0;
    Eigen::VectorXd theta = ascend(problem, start, options.max_iterations, value);
    if (value > best) {
      best = value;
      best_theta = theta;
    }
  }
  if (!std::isfinite(best)) throw NumericalError("no finite marginal likelihood found");

  GPModel m = condition_gp(X, y, unpack_hyperparams(best_theta));
  m.initial_mll = initial_mll;
  return m;
}

Posterior gp_posterior(const GPModel& model, const Eigen::MatrixXd& Xq, bool clamp_psd) {
  if (Xq.cols() != model.train_X.cols()) throw DimensionError("query dimension does not match the model");
  const Eigen::MatrixXd Ks = matern52_gram(model.train_X, Xq, model.hyper);
  Posterior p;
  p.mean = (Ks.transpose() * model.alpha).array() + model.hyper.mean;
  const Eigen::MatrixXd V = model.chol.triangularView<Eigen::Lower>().solve(Ks);
  Eigen::MatrixXd cov = matern52_gram(Xq, Xq, model.hyper);
  cov.noalias() -= V.transpose() * V;
  cov = 0.5 * (cov + cov.transpose());
  if (clamp_psd) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.eigenvalues().minCoeff() < 0.0) {
      const Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(0.0);
      cov = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
      cov = 0.5 * (cov + cov.transpose());
    }
  } else {
    for (Eigen::Index i = 0; i < cov.rows(); ++i) cov(i, i) = std::max(cov(i, i), 0.0);
  }
  p.mean = p.mean.array() * model.y_scale + model.y_shift;
  p.cov = cov * (model.y_scale * model.y_scale);
  return p;
}

nlohmann::ordered_json hyperparams_to_json(const GPModel& model) {
  nlohmann::ordered_json j;
  j["mean"] = model.hyper.mean;
  j["signal_variance"] = model.hyper.signal_variance;
  j["noise_variance"] = model.hyper.noise_variance;
  j["length_scales"] = model.hyper.length_scales;
  j["y_shift"] = model.y_shift;
  j["y_scale"] = model.y_scale;
  j["mll"] = model.mll;
  j["initial_mll"] = model.initial_mll;
  return j;
}

}  // namespace blockmerge
