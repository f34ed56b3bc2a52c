#include "blockmerge/sobol.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/random/sobol.hpp>

#include "blockmerge/errors.hpp"
#include "blockmerge/keyed_rng.hpp"

namespace blockmerge {

namespace {

using SobolTable = boost::random::detail::qrng_tables::sobol;
using SobolEngine = boost::random::sobol_engine<std::uint32_t, 32, SobolTable>;

// Integer coordinates of the first n points. Boost's engine omits the origin,
// which is the first point of the standard sequence, so it is prepended.
template <typename Visit>
void sobol_words(std::size_t n, int d, std::uint64_t seed, bool scramble, Visit&& visit) {
  if (d < 1 || d > sobol_max_dimension()) {
    throw DimensionError("Sobol dimension " + std::to_string(d) + " outside 1.." +
                         std::to_string(sobol_max_dimension()));
  }
  std::vector<std::uint32_t> shift(static_cast<std::size_t>(d), 0u);
  if (scramble) {
    for (int j = 0; j < d; ++j) {
      shift[static_cast<std::size_t>(j)] = static_cast<std::uint32_t>(derive_seed(seed, static_cast<std::uint64_t>(j)) >> 32);
    }
  }
  if (n == 0) return;
  for (int j = 0; j < d; ++j) visit(std::size_t{0}, j, shift[static_cast<std::size_t>(j)]);
  SobolEngine engine(static_cast<std::size_t>(d));
  for (std::size_t i = 1; i < n; ++i) {
    for (int j = 0; j < d; ++j) visit(i, j, engine() ^ shift[static_cast<std::size_t>(j)]);
  }
}

}  // namespace

int sobol_max_dimension() { return static_cast<int>(SobolTable::max_dimension); }

Eigen::MatrixXd sobol(std::size_t n, int d, std::uint64_t seed, bool scramble) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), std::max(d, 0));
  sobol_words(n, d, seed, scramble, [&](std::size_t i, int j, std::uint32_t w) {
    out(static_cast<Eigen::Index>(i), j) = static_cast<double>(w) * 0x1.0p-32;
  });
  return out;
}

Eigen::MatrixXd sobol_normal(std::size_t n, int d, std::uint64_t seed) {
  const boost::math::normal_distribution<double> standard;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), std::max(d, 0));
  sobol_words(n, d, seed, true, [&](std::size_t i, int j, std::uint32_t w) {
    // cell midpoint keeps u strictly inside (0, 1)
    const double u = (static_cast<double>(w) + 0.5) * 0x1.0p-32;
    out(static_cast<Eigen::Index>(i), j) = boost::math::quantile(standard, u);
  });
  return out;
}

}  // namespace blockmerge
