#include "blockmerge/pareto.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "blockmerge/errors.hpp"

namespace blockmerge {

bool dominates(std::span<const double> a, std::span<const double> b) {
  bool strictly = false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] < b[k]) return false;
    if (a[k] > b[k]) strictly = true;
  }
  return strictly;
}

ParetoFront pareto_filter(const std::vector<Point>& Y) {
  ParetoFront front;
  if (Y.empty()) return front;
  const std::size_t K = Y.front().size();
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < Y.size(); ++i) {
    if (Y[i].size() != K) throw DimensionError("objective vectors differ in length");
    bool keep = true;
    for (std::size_t j = 0; j < Y.size() && keep; ++j) {
      if (j == i) continue;
      if (dominates(Y[j], Y[i])) keep = false;
      // an identical earlier point represents this one
      if (j < i && Y[j] == Y[i]) keep = false;
    }
    if (keep) kept.push_back(i);
  }
  std::stable_sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(Y[b].begin(), Y[b].end(), Y[a].begin(), Y[a].end());
  });
  for (std::size_t i : kept) {
    front.points.push_back(Y[i]);
    front.indices.push_back(i);
  }
  return front;
}

void validate_reference(const ParetoFront& front, const ReferencePoint& ref) {
  for (const Point& p : front.points) {
    if (p.size() != ref.r.size()) throw ReferenceError("reference dimension differs from the front");
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (!(ref.r[k] < p[k])) throw ReferenceError("reference point is not dominated by every front point");
    }
  }
}

ReferencePoint nadir_reference(const std::vector<Point>& Y, double offset_fraction) {
  if (Y.empty()) throw EmptyFrontError("no observations to place a reference point");
  const std::size_t K = Y.front().size();
  ReferencePoint ref;
  ref.r.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    double lo = Y.front()[k];
    double hi = lo;
    for (const Point& y : Y) {
      lo = std::min(lo, y[k]);
      hi = std::max(hi, y[k]);
    }
    const double span = hi - lo;
    const double offset = span > 0.0 ? offset_fraction * span : offset_fraction * std::max(1.0, std::abs(lo));
    ref.r[k] = lo - offset;
  }
  return ref;
}

double hypervolume_2d(std::vector<std::pair<double, double>>& pairs, double ref_x, double ref_y) {
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second > b.second);
  });
  double area = 0.0;
  double height = ref_y;
  for (const auto& [x, y] : pairs) {
    if (x <= ref_x) break;
    if (y > height) {
      area += (x - ref_x) * (y - height);
      height = y;
    }
  }
  return area;
}

namespace {

double hypervolume_3d(std::vector<Point> pts, std::span<const double> ref) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a[2] > b[2]; });
  double volume = 0.0;
  std::vector<std::pair<double, double>> slice;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double next_z = i + 1 < pts.size() ? pts[i + 1][2] : ref[2];
    const double depth = pts[i][2] - next_z;
    if (depth <= 0.0) continue;
    slice.clear();
    for (std::size_t j = 0; j <= i; ++j) slice.emplace_back(pts[j][0], pts[j][1]);
    volume += depth * hypervolume_2d(slice, ref[0], ref[1]);
  }
  return volume;
}

HypervolumeEstimate monte_carlo_hypervolume(const std::vector<Point>& pts, std::span<const double> ref,
                                            std::size_t samples, std::uint64_t seed) {
  HypervolumeEstimate est;
  est.exact = false;
  if (pts.empty()) return est;
  const std::size_t K = ref.size();
  Point upper(ref.begin(), ref.end());
  for (const Point& p : pts) {
    for (std::size_t k = 0; k < K; ++k) upper[k] = std::max(upper[k], p[k]);
  }
  double box = 1.0;
  for (std::size_t k = 0; k < K; ++k) box *= upper[k] - ref[k];
  if (box <= 0.0) return est;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Point z(K);
  std::size_t hits = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t k = 0; k < K; ++k) z[k] = ref[k] + unit(rng) * (upper[k] - ref[k]);
    for (const Point& p : pts) {
      bool covered = true;
      for (std::size_t k = 0; k < K && covered; ++k) covered = z[k] <= p[k];
      if (covered) {
        ++hits;
        break;
      }
    }
  }
  const double frac = static_cast<double>(hits) / static_cast<double>(samples);
  est.value = box * frac;
  est.standard_error = box * std::sqrt(frac * (1.0 - frac) / static_cast<double>(samples));
  return est;
}

std::vector<Point> strictly_above(const std::vector<Point>& points, std::span<const double> ref) {
  std::vector<Point> out;
  out.reserve(points.size());
  for (const Point& p : points) {
    bool above = p.size() == ref.size();
    for (std::size_t k = 0; k < ref.size() && above; ++k) above = p[k] > ref[k];
    if (above) out.push_back(p);
  }
  return out;
}

}  // namespace

double hypervolume_of_points(const std::vector<Point>& points, std::span<const double> ref) {
  const std::vector<Point> pts = strictly_above(points, ref);
  if (pts.empty()) return 0.0;
  switch (ref.size()) {
    case 1: {
      double best = ref[0];
      for (const Point& p : pts) best = std::max(best, p[0]);
      return best - ref[0];
    }
    case 2: {
      std::vector<std::pair<double, double>> pairs;
      pairs.reserve(pts.size());
      for (const Point& p : pts) pairs.emplace_back(p[0], p[1]);
      return hypervolume_2d(pairs, ref[0], ref[1]);
    }
    case 3:
      return hypervolume_3d(pts, ref);
    default:
      return monte_carlo_hypervolume(pts, ref, 200000, 0).value;
  }
}

HypervolumeEstimate hypervolume_estimate(const ParetoFront& front, const ReferencePoint& ref,
                                         std::size_t mc_samples, std::uint64_t seed) {
  validate_reference(front, ref);
  if (ref.r.size() <= 3) return {hypervolume_of_points(front.points, ref.r), 0.0, true};
  return monte_carlo_hypervolume(front.points, ref.r, mc_samples, seed);
}

double hypervolume(const ParetoFront& front, const ReferencePoint& ref) {
  return hypervolume_estimate(front, ref).value;
}

}  // namespace blockmerge
