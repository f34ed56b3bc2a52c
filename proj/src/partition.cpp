#include "blockmerge/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "blockmerge/errors.hpp"

namespace blockmerge {

DiffProfile make_profile(std::vector<double> d, int norm_order) {
  DiffProfile p;
  for (double v : d) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("layer differences must be finite and >= 0");
  }
  p.total = std::accumulate(d.begin(), d.end(), 0.0);
  p.d = std::move(d);
  p.norm_order = norm_order;
  return p;
}

DiffProfile DiffProfile::normalized() const {
  if (total <= 0.0 || d.empty()) return *this;
  const double scale = static_cast<double>(d.size()) / total;
  std::vector<double> scaled(d.size());
  std::transform(d.begin(), d.end(), scaled.begin(), [scale](double v) { return v * scale; });
  return make_profile(std::move(scaled), norm_order);
}

DiffProfile compute_layer_diffs(std::span<const TensorMap> models, const TensorMap* base,
                                const LayerIndex& index, int norm_order) {
  if (models.size() < 2) throw ArityError("layer differences need at least two models");
  if (norm_order != 1 && norm_order != 2) throw DomainError("norm order must be 1 or 2");
  for (std::size_t i = 1; i < models.size(); ++i) {
    require_compatible(models[0], models[i], "model " + std::to_string(i));
  }
  if (base) require_compatible(models[0], *base, "base model");

  const std::size_t n = models.size();
  std::vector<double> d;
  d.reserve(index.layer_groups.size());
  std::vector<double> tv(n);
  std::vector<double> acc(n);
  for (const LayerGroup& group : index.layer_groups) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (const std::string& name : group.tensor_names) {
      std::vector<const float*> src(n);
      for (std::size_t i = 0; i < n; ++i) src[i] = models[i].at(name).data.data();
      const float* ref = base ? base->at(name).data.data() : nullptr;
      const std::size_t count = models[0].at(name).data.size();
      for (std::size_t e = 0; e < count; ++e) {
        double anchor = 0.0;
        if (ref) {
          anchor = ref[e];
        } else {
          for (std::size_t i = 0; i < n; ++i) anchor += src[i][e];
          anchor /= static_cast<double>(n);
        }
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          tv[i] = static_cast<double>(src[i][e]) - anchor;
          mean += tv[i];
        }
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const double dev = std::abs(tv[i] - mean);
          acc[i] += norm_order == 1 ? dev : dev * dev;
        }
      }
    }
    double layer = 0.0;
    for (double a : acc) layer += norm_order == 1 ? a : std::sqrt(a);
    d.push_back(layer);
  }
  return make_profile(std::move(d), norm_order);
}

namespace {

void check_config(const PartitionConfig& cfg) {
  if (cfg.blocks < 1) throw ConfigError("block count must be >= 1");
  if (!(cfg.lambda >= 0.0) || !(cfg.variance_weight >= 0.0)) {
    throw ConfigError("lambda and variance_weight must be >= 0");
  }
  if (cfg.lambda == 0.0 && cfg.variance_weight == 0.0) {
    throw ConfigError("lambda and variance_weight cannot both be zero");
  }
}

}  // namespace

SegmentCost::SegmentCost(const DiffProfile& profile, const PartitionConfig& cfg)
    : prefix_(profile.d.size() + 1, 0.0),
      prefix_sq_(profile.d.size() + 1, 0.0),
      target_(profile.total / static_cast<double>(std::max(cfg.blocks, 1))),
      lambda_(cfg.lambda),
      variance_weight_(cfg.variance_weight) {
  for (std::size_t l = 0; l < profile.d.size(); ++l) {
    prefix_[l + 1] = prefix_[l] + profile.d[l];
    prefix_sq_[l + 1] = prefix_sq_[l] + profile.d[l] * profile.d[l];
  }
}

double SegmentCost::operator()(int i, int j) const {
  if (i < 0 || j < i || j >= layer_count()) {
    throw IndexError("segment [" + std::to_string(i) + ", " + std::to_string(j) + "] outside 0.." +
                     std::to_string(layer_count() - 1));
  }
  const double n = static_cast<double>(j - i + 1);
  const double sum = prefix_[j + 1] - prefix_[i];
  const double sum_sq = prefix_sq_[j + 1] - prefix_sq_[i];
  // population variance * count == sum of squared deviations
  const double sse = std::max(0.0, sum_sq - sum * sum / n);
  const double dev = sum - target_;
  return variance_weight_ * sse + lambda_ * dev * dev;
}

double segment_cost(const DiffProfile& profile, int i, int j, const PartitionConfig& cfg) {
  return SegmentCost(profile, cfg)(i, j);
}

BlockPartition optimal_partition(const DiffProfile& profile, const PartitionConfig& cfg) {
  check_config(cfg);
  const int L = profile.layer_count();
  const int K = cfg.blocks;
  if (K > L) {
    throw InfeasibleError(std::to_string(K) + " blocks requested for " + std::to_string(L) + " layers");
  }
  const SegmentCost cost(profile, cfg);
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // dp[k][l]: best cost of splitting the first l layers into k blocks.
  std::vector<std::vector<double>> dp(K + 1, std::vector<double>(L + 1, kInf));
  std::vector<std::vector<int>> split(K + 1, std::vector<int>(L + 1, -1));
  dp[0][0] = 0.0;
  for (int k = 1; k <= K; ++k) {
    // the remaining K-k blocks need at least one layer each
    for (int l = k; l <= L - (K - k); ++l) {
      const double ideal = static_cast<double>(l) / k;
      for (int m = k - 1; m <= l - 1; ++m) {
        if (dp[k - 1][m] == kInf) continue;
        const double candidate = dp[k - 1][m] + cost(m, l - 1);
        bool take = candidate < dp[k][l];
        if (cfg.tie_break == TieBreak::kMostBalanced && split[k][l] >= 0 &&
            std::abs(candidate - dp[k][l]) <= 1e-12 * std::max(1.0, std::abs(candidate))) {
          take = std::abs((l - m) - ideal) < std::abs((l - split[k][l]) - ideal);
        }
        if (take) {
          dp[k][l] = candidate;
          split[k][l] = m;
        }
      }
    }
  }

  BlockPartition out;
  out.cost = dp[K][L];
  out.blocks.resize(K);
  int l = L;
  for (int k = K; k >= 1; --k) {
    const int m = split[k][l];
    out.blocks[k - 1] = {m, l - 1};
    l = m;
  }
  return out;
}

std::uint64_t composition_count(int layers, int blocks) {
  if (blocks < 1 || blocks > layers) return 0;
  // C(n, r) with n = L-1, r = K-1, computed incrementally (exact at each step)
  const std::uint64_t n = static_cast<std::uint64_t>(layers - 1);
  std::uint64_t r = static_cast<std::uint64_t>(blocks - 1);
  r = std::min(r, n - r);
  std::uint64_t c = 1;
  for (std::uint64_t i = 1; i <= r; ++i) {
    const std::uint64_t num = n - r + i;
    if (c > std::numeric_limits<std::uint64_t>::max() / num) return std::numeric_limits<std::uint64_t>::max();
    c = c * num / i;
  }
  return c;
}

void for_each_composition(int layers, int blocks,
                          const std::function<void(std::span<const int>)>& visit) {
  if (blocks < 1 || blocks > layers) return;
  std::vector<int> ends(blocks);
  ends[blocks - 1] = layers - 1;
  // ends[k] is the last layer of block k; recursion over k = 0..blocks-2
  std::function<void(int, int)> place = [&](int k, int start) {
    if (k == blocks - 1) {
      visit(ends);
      return;
    }
    const int remaining = blocks - 1 - k;
    for (int end = start; end <= layers - 1 - remaining; ++end) {
      ends[k] = end;
      place(k + 1, end + 1);
    }
  };
  place(0, 0);
}

BlockPartition brute_force_partition(const DiffProfile& profile, const PartitionConfig& cfg) {
  check_config(cfg);
  const int L = profile.layer_count();
  if (cfg.blocks > L) {
    throw InfeasibleError(std::to_string(cfg.blocks) + " blocks requested for " + std::to_string(L) + " layers");
  }
  if (composition_count(L, cfg.blocks) > 1'000'000) {
    throw BudgetError("brute force over " + std::to_string(L) + " layers and " +
                      std::to_string(cfg.blocks) + " blocks exceeds 1e6 candidates");
  }
  const SegmentCost cost(profile, cfg);
  BlockPartition best;
  best.cost = std::numeric_limits<double>::infinity();
  for_each_composition(L, cfg.blocks, [&](std::span<const int> ends) {
    double total = 0.0;
    int start = 0;
    for (int end : ends) {
      total += cost(start, end);
      start = end + 1;
    }
    if (total < best.cost) {
      best.cost = total;
      best.blocks.clear();
      start = 0;
      for (int end : ends) {
        best.blocks.push_back({start, end});
        start = end + 1;
      }
    }
  });
  return best;
}

BlockPartition attach_boundary_blocks(BlockPartition partition, const LayerIndex& index) {
  partition.has_embedding_block = !index.embedding_names.empty();
  partition.has_head_block = !index.head_names.empty();
  return partition;
}

void validate_partition(const BlockPartition& partition, int layer_count) {
  int next = 0;
  for (const Block& b : partition.blocks) {
    if (b.start != next || b.end < b.start) {
      throw ShapeError("partition blocks must be contiguous, non-empty and start at layer 0");
    }
    next = b.end + 1;
  }
  if (next != layer_count) {
    throw ShapeError("partition covers " + std::to_string(next) + " layers, model has " +
                     std::to_string(layer_count));
  }
}

std::vector<std::pair<std::string, int>> tensor_block_columns(const BlockPartition& partition,
                                                              const LayerIndex& index) {
  validate_partition(partition, index.layer_count());
  std::vector<std::pair<std::string, int>> out;
  const int offset = partition.has_embedding_block ? 1 : 0;
  if (!index.embedding_names.empty()) {
    if (!partition.has_embedding_block) throw ShapeError("partition lacks an embedding block");
    for (const auto& name : index.embedding_names) out.emplace_back(name, 0);
  }
  for (std::size_t b = 0; b < partition.blocks.size(); ++b) {
    for (int l = partition.blocks[b].start; l <= partition.blocks[b].end; ++l) {
      for (const auto& name : index.layer_groups[l].tensor_names) {
        out.emplace_back(name, offset + static_cast<int>(b));
      }
    }
  }
  if (!index.head_names.empty()) {
    if (!partition.has_head_block) throw ShapeError("partition lacks a head block");
    const int column = offset + static_cast<int>(partition.blocks.size());
    for (const auto& name : index.head_names) out.emplace_back(name, column);
  }
  return out;
}

nlohmann::ordered_json partition_to_json(const DiffProfile& profile, const PartitionConfig& cfg,
                                         const BlockPartition& partition) {
  nlohmann::ordered_json j;
  j["d"] = profile.d;
  j["norm_order"] = profile.norm_order;
  j["K"] = cfg.blocks;
  j["lambda"] = cfg.lambda;
  j["variance_weight"] = cfg.variance_weight;
  j["blocks"] = nlohmann::ordered_json::array();
  for (const Block& b : partition.blocks) j["blocks"].push_back({b.start, b.end});
  j["cost"] = partition.cost;
  j["embedding_block"] = partition.has_embedding_block;
  j["head_block"] = partition.has_head_block;
  return j;
}

BlockPartition partition_from_json(const nlohmann::json& j) {
  BlockPartition p;
  try {
    for (const auto& b : j.at("blocks")) p.blocks.push_back({b.at(0).get<int>(), b.at(1).get<int>()});
    p.cost = j.value("cost", 0.0);
    p.has_embedding_block = j.value("embedding_block", false);
    p.has_head_block = j.value("head_block", false);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed partition document: ") + e.what());
  }
  return p;
}

}  // namespace blockmerge
