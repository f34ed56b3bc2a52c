#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockmerge/tensor_store.hpp"

namespace blockmerge {

/// Per-layer disagreement between the task vectors of several models.
struct DiffProfile {
  std::vector<double> d;
  int norm_order = 2;
  double total = 0.0;

  int layer_count() const noexcept { return static_cast<int>(d.size()); }
  /// Profile rescaled so that total == layer_count(); unchanged if total == 0.
  DiffProfile normalized() const;
};

DiffProfile make_profile(std::vector<double> d, int norm_order = 2);

enum class TieBreak { kSmallestSplit, kMostBalanced };

struct PartitionConfig {
  int blocks = 6;
  double lambda = 1.0;
  double variance_weight = 1.0;
  TieBreak tie_break = TieBreak::kSmallestSplit;
};

/// Contiguous inclusive layer range.
struct Block {
  int start = 0;
  int end = 0;
  int size() const noexcept { return end - start + 1; }
  bool operator==(const Block&) const = default;
};

struct BlockPartition {
  std::vector<Block> blocks;
  bool has_embedding_block = false;
  bool has_head_block = false;
  double cost = 0.0;

  /// Number of searchable weights: attention blocks plus boundary blocks.
  int decision_dimension() const noexcept {
    return static_cast<int>(blocks.size()) + (has_embedding_block ? 1 : 0) + (has_head_block ? 1 : 0);
  }
};

/// d_l = sum_i || TV_l^(i) - mean_i TV_l^(i) ||_p over the concatenation of
/// every tensor in layer l. Without a base, the model mean stands in for it;
/// the result does not depend on the choice of base.
DiffProfile compute_layer_diffs(std::span<const TensorMap> models, const TensorMap* base,
                                const LayerIndex& index, int norm_order);

/// O(1) segment costs from prefix sums of d and d^2.
class SegmentCost {
 public:
  SegmentCost(const DiffProfile& profile, const PartitionConfig& cfg);

  /// w_var * SSE(d_i..d_j) + lambda * (sum(d_i..d_j) - total/K)^2.
  double operator()(int i, int j) const;
  int layer_count() const noexcept { return static_cast<int>(prefix_.size()) - 1; }

 private:
  std::vector<double> prefix_;
  std::vector<double> prefix_sq_;
  double target_;
  double lambda_;
  double variance_weight_;
};

double segment_cost(const DiffProfile& profile, int i, int j, const PartitionConfig& cfg);

/// Globally optimal K-block contiguous partition by dynamic programming,
/// O(K L^2). Ties keep the earliest split unless cfg.tie_break asks for the
/// split whose last block is closest to the average block length.
BlockPartition optimal_partition(const DiffProfile& profile, const PartitionConfig& cfg);

/// Number of contiguous K-block compositions of L layers, C(L-1, K-1),
/// saturating at UINT64_MAX.
std::uint64_t composition_count(int layers, int blocks);

/// Calls `visit` with the inclusive end layer of each block for every
/// composition of `layers` into `blocks` contiguous parts.
void for_each_composition(int layers, int blocks,
                          const std::function<void(std::span<const int>)>& visit);

/// Exhaustive search over all compositions. Test oracle for
/// optimal_partition; refuses instances with more than 1e6 candidates.
BlockPartition brute_force_partition(const DiffProfile& profile, const PartitionConfig& cfg);

/// Marks embedding and head blocks present when the index has such tensors.
BlockPartition attach_boundary_blocks(BlockPartition partition, const LayerIndex& index);

/// Column of the block-weight matrix that governs each tensor of the index.
/// Embedding block first, then attention blocks, then head block.
std::vector<std::pair<std::string, int>> tensor_block_columns(const BlockPartition& partition,
                                                              const LayerIndex& index);

void validate_partition(const BlockPartition& partition, int layer_count);

nlohmann::ordered_json partition_to_json(const DiffProfile& profile, const PartitionConfig& cfg,
                                         const BlockPartition& partition);
BlockPartition partition_from_json(const nlohmann::json& j);

}  // namespace blockmerge
