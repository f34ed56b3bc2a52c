#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace blockmerge {

using Point = std::vector<double>;

/// Maximization dominance: a >= b everywhere and a > b somewhere.
bool dominates(std::span<const double> a, std::span<const double> b);

struct ParetoFront {
  std::vector<Point> points;
  std::vector<std::size_t> indices;  // positions in the archive

  bool empty() const noexcept { return points.empty(); }
  std::size_t size() const noexcept { return points.size(); }
};

/// Non-dominated subset, ordered by objective 0 descending (ties by the next
/// objective). Duplicates collapse to the lowest archive index.
ParetoFront pareto_filter(const std::vector<Point>& Y);

struct ReferencePoint {
  Point r;
};

/// Throws ReferenceError unless every front point is strictly better than r
/// in every objective.
void validate_reference(const ParetoFront& front, const ReferencePoint& ref);

/// Per-objective minimum of Y minus `offset_fraction` of the observed span
/// (or of max(1, |min|) when the span is zero).
ReferencePoint nadir_reference(const std::vector<Point>& Y, double offset_fraction = 0.01);

/// Dominated volume of the front above the reference. Exact for K <= 3;
/// for K > 3 a fixed-seed Monte Carlo estimate (see hypervolume_estimate).
double hypervolume(const ParetoFront& front, const ReferencePoint& ref);

struct HypervolumeEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  bool exact = true;
};

HypervolumeEstimate hypervolume_estimate(const ParetoFront& front, const ReferencePoint& ref,
                                         std::size_t mc_samples = 200000, std::uint64_t seed = 0);

/// Dominated volume of an arbitrary point set (dominated points allowed;
/// points not strictly above `ref` contribute nothing). Exact for K <= 3.
double hypervolume_of_points(const std::vector<Point>& points, std::span<const double> ref);

/// Specialized 2-objective sweep over (x, y) pairs; `pairs` is reordered.
double hypervolume_2d(std::vector<std::pair<double, double>>& pairs, double ref_x, double ref_y);

}  // namespace blockmerge
