#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockmerge/partition.hpp"
#include "blockmerge/tensor_store.hpp"

namespace blockmerge {

enum class WeightMode { kInterpolation, kTaskArithmetic };

/// values[i][j]: weight of model i in block j.
struct BlockWeights {
  std::vector<std::vector<double>> values;
  WeightMode mode = WeightMode::kInterpolation;
  double max_weight = 1.0;  // task-arithmetic upper bound

  std::size_t model_count() const noexcept { return values.size(); }
  std::size_t block_count() const noexcept { return values.empty() ? 0 : values.front().size(); }
};

/// Checks shape against (models, blocks) and the mode's constraints.
void validate_weights(const BlockWeights& weights, std::size_t models, std::size_t blocks);

/// Interpolation: sum_i w_ij M_i. Task arithmetic: base + sum_i w_ij (M_i - base).
/// Output keeps model 0's tensor order and metadata.
TensorMap block_wise_merge(std::span<const TensorMap> models, const TensorMap* base,
                           const BlockPartition& partition, const LayerIndex& index,
                           const BlockWeights& weights);

/// Two-model search space: x_j is model A's share of block j.
BlockWeights decision_vector_to_weights(std::span<const double> x, std::size_t n_blocks);

enum class MergeStrategy { kBlockWise, kTaskArithmetic, kTies, kDareTies, kDareTa, kBreadcrumbs, kDella };

MergeStrategy parse_strategy(const std::string& name);
std::string strategy_name(MergeStrategy s);

struct MergeRecipe {
  MergeStrategy strategy = MergeStrategy::kTaskArithmetic;
  double alpha = 1.0;
  double top_k_fraction = 0.2;
  double drop_p = 0.5;
  double mask_low_pct = 0.1;
  double mask_high_pct = 0.99;
  double della_lambda = 1.0;
  double della_p = 0.5;
  double della_epsilon = 0.1;  // half-width of the drop-probability ramp
  std::uint64_t seed = 0;
};

void validate_recipe(const MergeRecipe& recipe);

/// Model-level baselines (task arithmetic, TIES, DARE, Breadcrumbs, DELLA),
/// applied tensor by tensor against `base`.
TensorMap merge_model_level(std::span<const TensorMap> models, const TensorMap& base,
                            const MergeRecipe& recipe);

nlohmann::ordered_json recipe_to_json(const MergeRecipe& recipe);
MergeRecipe recipe_from_json(const nlohmann::json& j);

}  // namespace blockmerge
