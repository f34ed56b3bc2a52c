#include "blockmerge/merge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "blockmerge/errors.hpp"
#include "blockmerge/keyed_rng.hpp"

namespace blockmerge {

void validate_weights(const BlockWeights& weights, std::size_t models, std::size_t blocks) {
  if (weights.model_count() != models) {
    throw ArityError("weights have " + std::to_string(weights.model_count()) + " rows for " +
                     std::to_string(models) + " models");
  }
  for (const auto& row : weights.values) {
    if (row.size() != blocks) {
      throw ArityError("weights have " + std::to_string(row.size()) + " columns for " +
                       std::to_string(blocks) + " blocks");
    }
  }
  constexpr double kTol = 1e-6;
  if (weights.mode == WeightMode::kInterpolation) {
    for (std::size_t j = 0; j < blocks; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < models; ++i) {
        const double w = weights.values[i][j];
        if (!(w >= -kTol && w <= 1.0 + kTol)) {
          throw ConstraintError("interpolation weight outside [0,1] in block " + std::to_string(j));
        }
        sum += w;
      }
      if (std::abs(sum - 1.0) > kTol) {
        throw ConstraintError("weights of block " + std::to_string(j) + " sum to " + std::to_string(sum));
      }
    }
  } else {
    for (const auto& row : weights.values) {
      for (double w : row) {
        if (!(w >= -kTol && w <= weights.max_weight + kTol)) {
          throw ConstraintError("task-arithmetic weight outside [0, w_max]");
        }
      }
    }
  }
}

TensorMap block_wise_merge(std::span<const TensorMap> models, const TensorMap* base,
                           const BlockPartition& partition, const LayerIndex& index,
                           const BlockWeights& weights) {
  if (models.empty()) throw ArityError("block-wise merge needs at least one model");
  for (std::size_t i = 1; i < models.size(); ++i) {
    require_compatible(models[0], models[i], "model " + std::to_string(i));
  }
  if (weights.mode == WeightMode::kTaskArithmetic) {
    if (!base) throw ConfigError("task-arithmetic block weights need a base model");
    require_compatible(models[0], *base, "base model");
  }
  validate_weights(weights, models.size(), static_cast<std::size_t>(partition.decision_dimension()));

  std::unordered_map<std::string, int> column;
  for (auto& [name, col] : tensor_block_columns(partition, index)) column.emplace(std::move(name), col);

  TensorMap out;
  out.metadata() = models[0].metadata();
  const std::size_t n = models.size();
  for (const Tensor& proto : models[0].entries()) {
    auto it = column.find(proto.name);
    if (it == column.end()) throw ShapeError("tensor '" + proto.name + "' is not covered by the layer index");
    const int j = it->second;
    std::vector<const float*> src(n);
    for (std::size_t i = 0; i < n; ++i) src[i] = models[i].at(proto.name).data.data();

    Tensor t{proto.name, proto.shape, std::vector<float>(proto.data.size())};
    if (weights.mode == WeightMode::kInterpolation) {
      for (std::size_t e = 0; e < t.data.size(); ++e) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += weights.values[i][j] * static_cast<double>(src[i][e]);
        t.data[e] = static_cast<float>(acc);
      }
    } else {
      const float* b = base->at(proto.name).data.data();
      for (std::size_t e = 0; e < t.data.size(); ++e) {
        const double anchor = b[e];
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          acc += weights.values[i][j] * (static_cast<double>(src[i][e]) - anchor);
        }
        t.data[e] = static_cast<float>(anchor + acc);
      }
    }
    out.add(std::move(t));
  }
  return out;
}

BlockWeights decision_vector_to_weights(std::span<const double> x, std::size_t n_blocks) {
  if (x.size() != n_blocks) {
    throw ArityError("decision vector has " + std::to_string(x.size()) + " entries for " +
                     std::to_string(n_blocks) + " blocks");
  }
  BlockWeights w;
  w.mode = WeightMode::kInterpolation;
  w.values.assign(2, std::vector<double>(n_blocks));
  for (std::size_t j = 0; j < n_blocks; ++j) {
    if (!(x[j] >= 0.0 && x[j] <= 1.0)) throw DomainError("decision variable outside [0,1]");
    w.values[0][j] = x[j];
    w.values[1][j] = 1.0 - x[j];
  }
  return w;
}

namespace {

struct StrategyName {
  MergeStrategy strategy;
  const char* name;
};

constexpr StrategyName kStrategyNames[] = {
    {MergeStrategy::kBlockWise, "block-wise"},   {MergeStrategy::kTaskArithmetic, "task-arithmetic"},
    {MergeStrategy::kTies, "ties"},              {MergeStrategy::kDareTies, "dare-ties"},
    {MergeStrategy::kDareTa, "dare-ta"},         {MergeStrategy::kBreadcrumbs, "breadcrumbs"},
    {MergeStrategy::kDella, "della"},
};

using Vec = std::vector<double>;

// Indices sorted by ascending magnitude, ties by position.
std::vector<std::size_t> magnitude_order(const Vec& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(v[a]) < std::abs(v[b]); });
  return order;
}

Vec keep_top_k(const Vec& v, double fraction) {
  const std::size_t n = v.size();
  const auto k = static_cast<std::size_t>(
      std::clamp(std::ceil(fraction * static_cast<double>(n) - 1e-9), 0.0, static_cast<double>(n)));
  if (k == n) return v;
  Vec out(n, 0.0);
  // largest k magnitudes; among equal magnitudes the earlier position wins
  std::vector<std::size_t> ranked(n);
  std::iota(ranked.begin(), ranked.end(), 0);
  std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(v[a]) > std::abs(v[b]);
  });
  for (std::size_t r = 0; r < k; ++r) out[ranked[r]] = v[ranked[r]];
  return out;
}

Vec random_drop(const Vec& v, double p, const KeyedUniform& rng) {
  Vec out(v.size(), 0.0);
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t e = 0; e < v.size(); ++e) {
    if (rng.at(e) >= p) out[e] = v[e] * scale;
  }
  return out;
}

Vec percentile_mask(const Vec& v, double low, double high) {
  const auto order = magnitude_order(v);
  const double n = static_cast<double>(v.size());
  Vec out(v.size(), 0.0);
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const double pct = (static_cast<double>(rank) + 0.5) / n;
    if (pct >= low && pct <= high) out[order[rank]] = v[order[rank]];
  }
  return out;
}

Vec magnitude_prune(const Vec& v, double mean_p, double epsilon, const KeyedUniform& rng) {
  const auto order = magnitude_order(v);
  const std::size_t n = v.size();
  Vec out(n, 0.0);
  for (std::size_t rank = 0; rank < n; ++rank) {
    const double r = n > 1 ? static_cast<double>(rank) / static_cast<double>(n - 1) : 0.5;
    // smallest magnitudes (r = 0) get the highest drop probability
    const double p = std::clamp(mean_p + epsilon * (1.0 - 2.0 * r), 0.01, 0.99);
    const std::size_t e = order[rank];
    if (rng.at(e) >= p) out[e] = v[e] / (1.0 - p);
  }
  return out;
}

Vec sum_vectors(const std::vector<Vec>& tvs) {
  Vec out(tvs.front().size(), 0.0);
  for (const Vec& tv : tvs) {
    for (std::size_t e = 0; e < out.size(); ++e) out[e] += tv[e];
  }
  return out;
}

// Sign election by the sign of the summed (magnitude-weighted) values, ties
// to +, then the mean of the nonzero entries agreeing with the elected sign.
Vec elect_and_average(const std::vector<Vec>& tvs) {
  Vec out(tvs.front().size(), 0.0);
  for (std::size_t e = 0; e < out.size(); ++e) {
    double total = 0.0;
    for (const Vec& tv : tvs) total += tv[e];
    const bool positive = total >= 0.0;
    double acc = 0.0;
    int count = 0;
    for (const Vec& tv : tvs) {
      const double v = tv[e];
      if (v != 0.0 && (v > 0.0) == positive) {
        acc += v;
        ++count;
      }
    }
    out[e] = count > 0 ? acc / count : 0.0;
  }
  return out;
}

}  // namespace

MergeStrategy parse_strategy(const std::string& name) {
  for (const auto& s : kStrategyNames) {
    if (name == s.name) return s.strategy;
  }
  throw ConfigError("unknown merge strategy '" + name + "'");
}

std::string strategy_name(MergeStrategy s) {
  for (const auto& entry : kStrategyNames) {
    if (entry.strategy == s) return entry.name;
  }
  return "unknown";
}

void validate_recipe(const MergeRecipe& r) {
  auto unit = [](double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0,1]");
  };
  unit(r.top_k_fraction, "top_k_fraction");
  unit(r.drop_p, "drop_p");
  unit(r.mask_low_pct, "mask_low_pct");
  unit(r.mask_high_pct, "mask_high_pct");
  unit(r.della_p, "della_p");
  if (!(r.mask_low_pct < r.mask_high_pct)) throw ConfigError("mask_low_pct must be below mask_high_pct");
  if (!(r.della_epsilon >= 0.0)) throw ConfigError("della_epsilon must be >= 0");
  if (!std::isfinite(r.alpha) || !std::isfinite(r.della_lambda)) throw ConfigError("scales must be finite");
}

TensorMap merge_model_level(std::span<const TensorMap> models, const TensorMap& base,
                            const MergeRecipe& recipe) {
  if (models.empty()) throw ArityError("model-level merge needs at least one model");
  validate_recipe(recipe);
  const bool uses_drop = recipe.strategy == MergeStrategy::kDareTa || recipe.strategy == MergeStrategy::kDareTies;
  if (recipe.strategy == MergeStrategy::kBlockWise) {
    throw ConfigError("block-wise merging needs a partition; use block_wise_merge");
  }
  if (uses_drop && recipe.drop_p >= 1.0) throw DegenerateError("drop_p = 1 drops every parameter");
  for (std::size_t i = 0; i < models.size(); ++i) {
    require_compatible(base, models[i], "model " + std::to_string(i));
  }

  TensorMap out;
  out.metadata() = base.metadata();
  for (const Tensor& b : base.entries()) {
    std::vector<Vec> tvs;
    tvs.reserve(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
      const auto& m = models[i].at(b.name).data;
      Vec tv(m.size());
      for (std::size_t e = 0; e < m.size(); ++e) tv[e] = static_cast<double>(m[e]) - static_cast<double>(b.data[e]);
      tvs.push_back(std::move(tv));
    }
    auto rng_for = [&](std::size_t i) { return KeyedUniform(recipe.seed, i, b.name); };

    Vec delta;
    double scale = recipe.alpha;
    switch (recipe.strategy) {
      case MergeStrategy::kTaskArithmetic:
        delta = sum_vectors(tvs);
        break;
      case MergeStrategy::kTies:
        for (auto& tv : tvs) tv = keep_top_k(tv, recipe.top_k_fraction);
        delta = elect_and_average(tvs);
        break;
      case MergeStrategy::kDareTa:
        for (std::size_t i = 0; i < tvs.size(); ++i) tvs[i] = random_drop(tvs[i], recipe.drop_p, rng_for(i));
        delta = sum_vectors(tvs);
        break;
      case MergeStrategy::kDareTies:
        for (std::size_t i = 0; i < tvs.size(); ++i) {
          tvs[i] = keep_top_k(random_drop(tvs[i], recipe.drop_p, rng_for(i)), recipe.top_k_fraction);
        }
        delta = elect_and_average(tvs);
        break;
      case MergeStrategy::kBreadcrumbs:
        for (auto& tv : tvs) tv = percentile_mask(tv, recipe.mask_low_pct, recipe.mask_high_pct);
        delta = sum_vectors(tvs);
        break;
      case MergeStrategy::kDella:
        for (std::size_t i = 0; i < tvs.size(); ++i) {
          tvs[i] = magnitude_prune(tvs[i], recipe.della_p, recipe.della_epsilon, rng_for(i));
        }
        delta = elect_and_average(tvs);
        scale = recipe.della_lambda;
        break;
      case MergeStrategy::kBlockWise:
        break;
    }

    Tensor t{b.name, b.shape, std::vector<float>(b.data.size())};
    for (std::size_t e = 0; e < t.data.size(); ++e) {
      t.data[e] = static_cast<float>(static_cast<double>(b.data[e]) + scale * delta[e]);
    }
    out.add(std::move(t));
  }
  return out;
}

nlohmann::ordered_json recipe_to_json(const MergeRecipe& r) {
  nlohmann::ordered_json j;
  j["strategy"] = strategy_name(r.strategy);
  j["alpha"] = r.alpha;
  j["top_k_fraction"] = r.top_k_fraction;
  j["drop_p"] = r.drop_p;
  j["mask_low_pct"] = r.mask_low_pct;
  j["mask_high_pct"] = r.mask_high_pct;
  j["della_lambda"] = r.della_lambda;
  j["della_p"] = r.della_p;
  j["della_epsilon"] = r.della_epsilon;
  j["seed"] = r.seed;
  return j;
}

MergeRecipe recipe_from_json(const nlohmann::json& j) {
  MergeRecipe r;
  try {
    r.strategy = parse_strategy(j.at("strategy").get<std::string>());
    r.alpha = j.value("alpha", r.alpha);
    r.top_k_fraction = j.value("top_k_fraction", r.top_k_fraction);
    r.drop_p = j.value("drop_p", r.drop_p);
    r.mask_low_pct = j.value("mask_low_pct", r.mask_low_pct);
    r.mask_high_pct = j.value("mask_high_pct", r.mask_high_pct);
    r.della_lambda = j.value("della_lambda", r.della_lambda);
    r.della_p = j.value("della_p", r.della_p);
    r.della_epsilon = j.value("della_epsilon", r.della_epsilon);
    r.seed = j.value("seed", r.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed merge recipe: ") + e.what());
  }
  return r;
}

}  // namespace blockmerge
