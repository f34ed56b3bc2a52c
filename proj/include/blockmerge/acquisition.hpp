#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Dense>

#include "blockmerge/pareto.hpp"
#include "blockmerge/surrogate.hpp"

namespace blockmerge {

/// Fixed standard-normal draws for the reparameterized posterior samples.
/// Column k*q + i drives candidate i of objective k.
struct BaseSamples {
  Eigen::MatrixXd eps;  // S x (q*K)
  std::uint64_t seed = 0;
  int q = 1;
  int objectives = 1;

  int samples() const noexcept { return static_cast<int>(eps.rows()); }
};

BaseSamples make_base_samples(int samples, int q, int objectives, std::uint64_t seed);

/// Monte Carlo qEHVI: mean over samples of HV(front + Y_s) - HV(front), with
/// Y_s = mu(Xcand) + L(Xcand) eps_s per objective (objectives independent).
/// Candidates are put in canonical (lexicographic) order first, so the value
/// does not depend on their order in the batch.
double qehvi(std::span<const GPModel> models, const ParetoFront& front, const ReferencePoint& ref,
             const Eigen::MatrixXd& candidates, const BaseSamples& base);

struct AcquisitionOptions {
  int q = 4;
  int mc_samples = 128;
  int sobol_probes = 1024;
  int restarts = 4;
  int iterations = 30;
  double fd_step = 1e-3;
  std::uint64_t seed = 0;
};

struct AcquisitionResult {
  Eigen::MatrixXd batch;        // q x D, entries in [0, 1]
  double value = 0.0;           // qEHVI of `batch` under the fixed base samples
  double best_probe_value = 0.0;  // best of the Sobol probe batches
};

/// Multi-start local ascent of qEHVI over [0,1]^(q x D). Starts are the best
/// Sobol probe batches plus perturbations of Pareto-optimal inputs. The
/// result is never worse than the best probe.
AcquisitionResult optimize_acquisition(std::span<const GPModel> models, const ParetoFront& front,
                                       const ReferencePoint& ref, const Eigen::MatrixXd& pareto_inputs,
                                       const AcquisitionOptions& options);

}  // namespace blockmerge
