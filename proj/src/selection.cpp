#include "blockmerge/selection.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "blockmerge/errors.hpp"

namespace blockmerge {

std::vector<PreferenceVector> das_dennis(int objectives, int divisions) {
  if (objectives < 1) throw ArityError("need at least one objective");
  if (divisions < 1) throw ConfigError("Das-Dennis divisions must be >= 1");
  std::vector<PreferenceVector> out;
  std::vector<int> parts(static_cast<std::size_t>(objectives));
  std::function<void(int, int)> fill = [&](int k, int left) {
    if (k == objectives - 1) {
      parts[static_cast<std::size_t>(k)] = left;
      PreferenceVector p;
      p.w.reserve(parts.size());
      for (int v : parts) p.w.push_back(static_cast<double>(v) / divisions);
      out.push_back(std::move(p));
      return;
    }
    for (int v = 0; v <= left; ++v) {
      parts[static_cast<std::size_t>(k)] = v;
      fill(k + 1, left - v);
    }
  };
  fill(0, divisions);
  return out;
}

Selection select_solutions(const ParetoFront& front, const std::vector<PreferenceVector>& prefs,
                           std::size_t top_k) {
  if (front.empty()) throw EmptyFrontError("cannot select from an empty front");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  const std::size_t n = front.size();
  const std::size_t K = front.points.front().size();

  std::vector<Point> scaled(n, Point(K));
  for (std::size_t k = 0; k < K; ++k) {
    double lo = front.points[0][k];
    double hi = lo;
    for (const Point& p : front.points) {
      lo = std::min(lo, p[k]);
      hi = std::max(hi, p[k]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i][k] = hi > lo ? (front.points[i][k] - lo) / (hi - lo) : 1.0;
    }
  }
  std::vector<double> sums(n);
  for (std::size_t i = 0; i < n; ++i) sums[i] = std::accumulate(scaled[i].begin(), scaled[i].end(), 0.0);

  Selection sel;
  std::vector<std::size_t> order(n);
  std::vector<double> cosines(n);
  for (const PreferenceVector& pref : prefs) {
    if (pref.w.size() != K) throw DimensionError("preference length differs from objective count");
    const double pn = std::sqrt(std::inner_product(pref.w.begin(), pref.w.end(), pref.w.begin(), 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      const double mn = std::sqrt(std::inner_product(scaled[i].begin(), scaled[i].end(), scaled[i].begin(), 0.0));
      const double dot = std::inner_product(scaled[i].begin(), scaled[i].end(), pref.w.begin(), 0.0);
      cosines[i] = (mn > 0.0 && pn > 0.0) ? dot / (mn * pn) : 0.0;
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cosines[a] > cosines[b]; });
    const std::size_t take = std::min(top_k, n);
    std::size_t chosen = order[0];
    for (std::size_t r = 1; r < take; ++r) {
      if (sums[order[r]] > sums[chosen]) chosen = order[r];
    }
    sel.by_preference.push_back({pref, chosen, front.indices[chosen], cosines[chosen]});
  }
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (front.points[i][k] > front.points[best][k]) best = i;
    }
    sel.best_per_objective.push_back(front.indices[best]);
  }
  return sel;
}

}  // namespace blockmerge
