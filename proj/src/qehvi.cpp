#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "blockmerge/acquisition.hpp"
#include "blockmerge/errors.hpp"
#include "blockmerge/keyed_rng.hpp"
#include "blockmerge/sobol.hpp"

namespace blockmerge {

BaseSamples make_base_samples(int samples, int q, int objectives, std::uint64_t seed) {
  if (samples < 1 || q < 1 || objectives < 1) throw ArityError("base samples need S, q, K >= 1");
  BaseSamples base;
  base.eps = sobol_normal(static_cast<std::size_t>(samples), q * objectives, seed);
  base.seed = seed;
  base.q = q;
  base.objectives = objectives;
  return base;
}

namespace {

Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov) {
  const double scale = std::max(cov.diagonal().maxCoeff(), 1e-300);
  for (double jitter : {0.0, 1e-12, 1e-10, 1e-8, kNoiseFloor}) {
    Eigen::MatrixXd A = cov;
    A.diagonal().array() += jitter * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericalError("posterior covariance is not positive definite after jitter");
}

Eigen::MatrixXd canonical_order(const Eigen::MatrixXd& X) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index d = 0; d < X.cols(); ++d) {
      if (X(a, d) != X(b, d)) return X(a, d) < X(b, d);
    }
    return a < b;
  });
  Eigen::MatrixXd out(X.rows(), X.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(order[i]);
  return out;
}

bool lexicographically_less(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::Map<const Eigen::VectorXd> va(a.data(), a.size());
  const Eigen::Map<const Eigen::VectorXd> vb(b.data(), b.size());
  return std::lexicographical_compare(va.begin(), va.end(), vb.begin(), vb.end());
}

}  // namespace

double qehvi(std::span<const GPModel> models, const ParetoFront& front, const ReferencePoint& ref,
             const Eigen::MatrixXd& candidates, const BaseSamples& base) {
  const int K = static_cast<int>(models.size());
  const int q = static_cast<int>(candidates.rows());
  if (K < 1 || static_cast<int>(ref.r.size()) != K) throw DimensionError("one model per objective required");
  if (q < 1) throw ArityError("qEHVI needs at least one candidate");
  if (base.eps.cols() != q * K) {
    throw ArityError("base samples have " + std::to_string(base.eps.cols()) + " columns, need q*K = " +
                     std::to_string(q * K));
  }
  const Eigen::MatrixXd X = canonical_order(candidates);

  std::vector<Eigen::VectorXd> means(static_cast<std::size_t>(K));
  std::vector<Eigen::MatrixXd> factors(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    Posterior post = gp_posterior(models[static_cast<std::size_t>(k)], X, false);
    means[static_cast<std::size_t>(k)] = std::move(post.mean);
    factors[static_cast<std::size_t>(k)] = covariance_factor(post.cov);
  }

  const int S = base.samples();
  double total = 0.0;
  if (K == 2) {
    std::vector<std::pair<double, double>> front_pairs;
    for (const Point& p : front.points) {
      if (p[0] > ref.r[0] && p[1] > ref.r[1]) front_pairs.emplace_back(p[0], p[1]);
    }
    std::vector<std::pair<double, double>> scratch = front_pairs;
    const double hv_front = hypervolume_2d(scratch, ref.r[0], ref.r[1]);
    Eigen::VectorXd y0(q);
    Eigen::VectorXd y1(q);
    for (int s = 0; s < S; ++s) {
      y0 = means[0] + factors[0] * base.eps.row(s).segment(0, q).transpose();
      y1 = means[1] + factors[1] * base.eps.row(s).segment(q, q).transpose();
      scratch = front_pairs;
      for (int i = 0; i < q; ++i) scratch.emplace_back(y0(i), y1(i));
      const double improvement = hypervolume_2d(scratch, ref.r[0], ref.r[1]) - hv_front;
      total += std::max(0.0, improvement);
    }
  } else {
    const double hv_front = hypervolume_of_points(front.points, ref.r);
    std::vector<Point> pts;
    for (int s = 0; s < S; ++s) {
      pts = front.points;
      std::vector<Eigen::VectorXd> ys(static_cast<std::size_t>(K));
      for (int k = 0; k < K; ++k) {
        ys[static_cast<std::size_t>(k)] = means[static_cast<std::size_t>(k)] +
            factors[static_cast<std::size_t>(k)] * base.eps.row(s).segment(k * q, q).transpose();
      }
      for (int i = 0; i < q; ++i) {
        Point y(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k) y[static_cast<std::size_t>(k)] = ys[static_cast<std::size_t>(k)](i);
        pts.push_back(std::move(y));
      }
      total += std::max(0.0, hypervolume_of_points(pts, ref.r) - hv_front);
    }
  }
  return total / static_cast<double>(S);
}

namespace {

struct Scored {
  Eigen::MatrixXd batch;
  double value;
};

bool better(const Scored& a, const Scored& b) {
  if (a.value != b.value) return a.value > b.value;
  return lexicographically_less(a.batch, b.batch);
}

Scored local_ascent(const std::function<double(const Eigen::MatrixXd&)>& f, Scored start, int iterations,
                    double h) {
  Scored cur = std::move(start);
  double step = 0.05;
  Eigen::MatrixXd grad(cur.batch.rows(), cur.batch.cols());
  for (int it = 0; it < iterations; ++it) {
    for (Eigen::Index i = 0; i < cur.batch.rows(); ++i) {
      for (Eigen::Index d = 0; d < cur.batch.cols(); ++d) {
        const double x = cur.batch(i, d);
        const double lo = std::max(0.0, x - h);
        const double hi = std::min(1.0, x + h);
        Eigen::MatrixXd probe = cur.batch;
        probe(i, d) = hi;
        const double f_hi = f(probe);
        probe(i, d) = lo;
        const double f_lo = f(probe);
        grad(i, d) = hi > lo ? (f_hi - f_lo) / (hi - lo) : 0.0;
      }
    }
    const double gmax = grad.cwiseAbs().maxCoeff();
    if (!(gmax > 0.0)) break;
    const Eigen::MatrixXd dir = grad / gmax;
    bool improved = false;
    while (step >= 1e-4) {
      Eigen::MatrixXd next = (cur.batch + step * dir).cwiseMax(0.0).cwiseMin(1.0);
      const double value = f(next);
      if (value > cur.value) {
        cur = {std::move(next), value};
        step = std::min(2.0 * step, 0.5);
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
  }
  return cur;
}

}  // namespace

AcquisitionResult optimize_acquisition(std::span<const GPModel> models, const ParetoFront& front,
                                       const ReferencePoint& ref, const Eigen::MatrixXd& pareto_inputs,
                                       const AcquisitionOptions& options) {
  if (models.empty()) throw ArityError("no surrogate models");
  if (options.q < 1) throw ArityError("batch size must be >= 1");
  const int D = models.front().dimension();
  const int q = options.q;
  const int K = static_cast<int>(models.size());
  const BaseSamples base = make_base_samples(options.mc_samples, q, K, derive_seed(options.seed, 11));
  auto objective = [&](const Eigen::MatrixXd& batch) { return qehvi(models, front, ref, batch, base); };

  const Eigen::MatrixXd probes =
      sobol(static_cast<std::size_t>(std::max(options.sobol_probes, 1)), q * D, derive_seed(options.seed, 12));
  std::vector<Scored> scored;
  scored.reserve(static_cast<std::size_t>(probes.rows()));
  for (Eigen::Index p = 0; p < probes.rows(); ++p) {
    // row-major reshape: candidate i occupies columns i*D .. i*D+D-1
    Eigen::MatrixXd batch(q, D);
    for (int i = 0; i < q; ++i) batch.row(i) = probes.row(p).segment(i * D, D);
    const double value = objective(batch);
    scored.push_back({std::move(batch), value});
  }
  std::sort(scored.begin(), scored.end(), better);

  AcquisitionResult result;
  result.best_probe_value = scored.front().value;

  std::vector<Scored> starts;
  const int perturbed = pareto_inputs.rows() > 0 ? options.restarts / 2 : 0;
  const int from_probes = std::max(1, options.restarts - perturbed);
  for (int s = 0; s < from_probes && s < static_cast<int>(scored.size()); ++s) starts.push_back(scored[static_cast<std::size_t>(s)]);
  std::mt19937_64 rng(derive_seed(options.seed, 13));
  std::normal_distribution<double> jitter(0.0, 0.1);
  std::uniform_int_distribution<Eigen::Index> pick(0, std::max<Eigen::Index>(pareto_inputs.rows() - 1, 0));
  for (int s = 0; s < perturbed; ++s) {
    Eigen::MatrixXd batch(q, D);
    for (int i = 0; i < q; ++i) {
      const Eigen::Index row = pick(rng);
      for (int d = 0; d < D; ++d) batch(i, d) = std::clamp(pareto_inputs(row, d) + jitter(rng), 0.0, 1.0);
    }
    const double value = objective(batch);
    starts.push_back({std::move(batch), value});
  }

  Scored best = scored.front();
  for (auto& start : starts) {
    Scored local = local_ascent(objective, std::move(start), options.iterations, options.fd_step);
    if (better(local, best)) best = std::move(local);
  }
  result.batch = std::move(best.batch);
  result.value = best.value;
  return result;
}

}  // namespace blockmerge
