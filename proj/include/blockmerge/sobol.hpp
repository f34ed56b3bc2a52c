#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace blockmerge {

/// Largest supported dimension (size of the direction-number table).
int sobol_max_dimension();

/// First n points of the d-dimensional Sobol sequence, rows in [0,1)^d. The
/// unscrambled sequence starts at the origin. With `scramble`, every
/// coordinate gets a random digital shift (XOR) keyed by `seed`.
Eigen::MatrixXd sobol(std::size_t n, int d, std::uint64_t seed, bool scramble = true);

/// Standard-normal draws from scrambled Sobol points via the inverse CDF.
Eigen::MatrixXd sobol_normal(std::size_t n, int d, std::uint64_t seed);

}  // namespace blockmerge
