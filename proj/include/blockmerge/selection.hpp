#pragma once

#include <cstddef>
#include <vector>

#include "blockmerge/pareto.hpp"

namespace blockmerge {

/// Non-negative weights over objectives summing to one.
struct PreferenceVector {
  std::vector<double> w;
};

/// Simplex lattice with H divisions: every vector with entries in
/// {0, 1/H, ..., 1} summing to 1, in lexicographic order.
/// Count is C(H+K-1, K-1).
std::vector<PreferenceVector> das_dennis(int objectives, int divisions);

struct PreferenceChoice {
  PreferenceVector preference;
  std::size_t front_position = 0;
  std::size_t archive_index = 0;
  double cosine = 0.0;
};

struct Selection {
  std::vector<PreferenceChoice> by_preference;
  /// Archive index of the best front member for each objective.
  std::vector<std::size_t> best_per_objective;
};

/// Rescales the front to [0,1] per objective, ranks members by cosine
/// similarity to each preference, and among the top_k picks the member with
/// the largest rescaled objective sum.
Selection select_solutions(const ParetoFront& front, const std::vector<PreferenceVector>& prefs,
                           std::size_t top_k);

}  // namespace blockmerge
