#include <chrono>
#include <random>

#include <doctest.h>

#include "blockmerge/errors.hpp"
#include "blockmerge/partition.hpp"
#include "support.hpp"

using namespace blockmerge;

namespace {

TensorMap one_layer(std::vector<float> w) {
  TensorMap m;
  m.add({"layers.0.w", {w.size()}, std::move(w)});
  return m;
}

PartitionConfig cfg_of(int K, double lambda, double w_var = 1.0) {
  PartitionConfig c;
  c.blocks = K;
  c.lambda = lambda;
  c.variance_weight = w_var;
  return c;
}

// Direct evaluation of the hybrid cost with a two-pass SSE.
double oracle_cost(const std::vector<double>& d, const std::vector<Block>& blocks, const PartitionConfig& c) {
  double total = 0.0;
  for (double v : d) total += v;
  double cost = 0.0;
  for (const Block& b : blocks) {
    double sum = 0.0;
    for (int l = b.start; l <= b.end; ++l) sum += d[static_cast<std::size_t>(l)];
    const double gap = sum - total / c.blocks;
    cost += c.variance_weight * testing::oracle::sse(d, b.start, b.end) + c.lambda * gap * gap;
  }
  return cost;
}

std::vector<double> random_profile(std::mt19937_64& rng, int L) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> d(static_cast<std::size_t>(L));
  for (auto& v : d) v = e(rng);
  return d;
}

}  // namespace

TEST_SUITE("partition") {

TEST_CASE("identical models give zero differences") {
  const TensorMap a = testing::fixture_model(4, 11);
  const std::vector<TensorMap> models{a, a};
  const LayerIndex idx = infer_layer_index(a, "layers.{n}.");
  const DiffProfile p = compute_layer_diffs(models, nullptr, idx, 2);
  CHECK(p.d == std::vector<double>(4, 0.0));
  CHECK(p.total == 0.0);
}

TEST_CASE("two-model differences by hand") {
  const std::vector<TensorMap> models{one_layer({1, 2}), one_layer({3, 4})};
  const LayerIndex idx = infer_layer_index(models[0], "layers.{n}.");
  const TensorMap base = one_layer({-5, 0.5});
  CHECK(compute_layer_diffs(models, &base, idx, 1).d[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(compute_layer_diffs(models, nullptr, idx, 1).d[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(compute_layer_diffs(models, &base, idx, 2).d[0] == doctest::Approx(std::sqrt(8.0)).epsilon(1e-12));
  CHECK(compute_layer_diffs(models, nullptr, idx, 2).d[0] == doctest::Approx(2.8284271247).epsilon(1e-9));
}

TEST_CASE("differences do not depend on the base") {
  const std::vector<TensorMap> models{testing::fixture_model(3, 1), testing::fixture_model(3, 2),
                                      testing::fixture_model(3, 3)};
  const TensorMap base = testing::fixture_model(3, 4);
  const LayerIndex idx = infer_layer_index(models[0], "layers.{n}.");
  for (int p : {1, 2}) {
    const DiffProfile with = compute_layer_diffs(models, &base, idx, p);
    const DiffProfile without = compute_layer_diffs(models, nullptr, idx, p);
    for (std::size_t l = 0; l < with.d.size(); ++l) CHECK(with.d[l] == doctest::Approx(without.d[l]).epsilon(1e-6));
  }
}

TEST_CASE("diff errors") {
  const TensorMap a = one_layer({1, 2});
  const LayerIndex idx = infer_layer_index(a, "layers.{n}.");
  const std::vector<TensorMap> single{a};
  CHECK_THROWS_AS(compute_layer_diffs(single, nullptr, idx, 2), ArityError);
  const std::vector<TensorMap> mismatched{a, one_layer({1, 2, 3})};
  CHECK_THROWS_AS(compute_layer_diffs(mismatched, nullptr, idx, 2), ShapeError);
}

TEST_CASE("segment cost examples") {
  CHECK(segment_cost(make_profile({1, 3}), 0, 1, cfg_of(1, 0.0)) == doctest::Approx(2.0));
  const DiffProfile p = make_profile({0.3, 7, 2.5});
  for (int l = 0; l < 3; ++l) CHECK(segment_cost(p, l, l, cfg_of(2, 0.0)) == 0.0);
  CHECK(segment_cost(make_profile({1, 1, 1, 1}), 0, 1, cfg_of(2, 1.0, 0.0)) == 0.0);
  CHECK_THROWS_AS(segment_cost(p, 2, 3, cfg_of(2, 1.0)), IndexError);
  CHECK_THROWS_AS(segment_cost(p, 2, 1, cfg_of(2, 1.0)), IndexError);
}

TEST_CASE("prefix-sum cost matches two-pass SSE") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = random_profile(rng, 15);
    const DiffProfile p = make_profile(d);
    const PartitionConfig c = cfg_of(3, 0.7, 1.3);
    for (int i = 0; i < 15; ++i) {
      for (int j = i; j < 15; ++j) {
        CHECK(segment_cost(p, i, j, c) == doctest::Approx(oracle_cost(d, {{i, j}}, c)).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("optimal partition examples") {
  const BlockPartition even = optimal_partition(make_profile({1, 1, 1, 1}), cfg_of(2, 1.0));
  CHECK(even.blocks == std::vector<Block>{{0, 1}, {2, 3}});
  CHECK(even.cost == 0.0);

  const DiffProfile p = make_profile({0.1, 0.1, 0.1, 5.0, 5.2});
  const BlockPartition natural = optimal_partition(p, cfg_of(2, 0.0));
  CHECK(natural.blocks == std::vector<Block>{{0, 2}, {3, 4}});
  CHECK(natural.cost == doctest::Approx(0.02).epsilon(1e-12));
  // enumerate the four splits
  int wins = 0;
  for (int m = 0; m < 4; ++m) {
    const double c = oracle_cost(p.d, {{0, m}, {m + 1, 4}}, cfg_of(2, 0.0));
    if (c <= natural.cost + 1e-12) ++wins;
  }
  CHECK(wins == 1);

  const BlockPartition singles = optimal_partition(make_profile({4, 1, 3}), cfg_of(3, 1.0));
  CHECK(singles.blocks == std::vector<Block>{{0, 0}, {1, 1}, {2, 2}});
}

TEST_CASE("more blocks than layers is infeasible") {
  CHECK_THROWS_AS(optimal_partition(make_profile({1, 2}), cfg_of(3, 1.0)), InfeasibleError);
  CHECK_THROWS_AS(optimal_partition(make_profile({1, 2}), cfg_of(2, 0.0, 0.0)), ConfigError);
}

TEST_CASE("brute force enumeration") {
  int visits = 0;
  for_each_composition(3, 2, [&](std::span<const int>) { ++visits; });
  CHECK(visits == 2);
  CHECK(composition_count(3, 2) == 2);
  CHECK(composition_count(12, 5) == 330);
  const BlockPartition whole = brute_force_partition(make_profile({1, 5, 2}), cfg_of(1, 1.0));
  CHECK(whole.blocks == std::vector<Block>{{0, 2}});
  CHECK_THROWS_AS(brute_force_partition(make_profile(std::vector<double>(60, 1.0)), cfg_of(8, 1.0)), BudgetError);
}

TEST_CASE("DP equals brute force on random profiles") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> pickL(4, 12);
  for (int trial = 0; trial < 100; ++trial) {
    const int L = pickL(rng);
    const int K = std::uniform_int_distribution<int>(1, std::min(5, L))(rng);
    const auto d = random_profile(rng, L);
    for (double lambda : {0.0, 0.5, 1.0, 10.0}) {
      const PartitionConfig c = cfg_of(K, lambda);
      const BlockPartition dp = optimal_partition(make_profile(d), c);
      const BlockPartition bf = brute_force_partition(make_profile(d), c);
      CHECK(std::abs(dp.cost - bf.cost) <= 1e-9);
      CHECK(dp.cost == doctest::Approx(oracle_cost(d, dp.blocks, c)).epsilon(1e-9));
      validate_partition(dp, L);
    }
  }
}

TEST_CASE("balance-only minimizes squared sum deviations") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    const auto d = random_profile(rng, 9);
    const PartitionConfig c = cfg_of(3, 1.0, 0.0);
    const BlockPartition dp = optimal_partition(make_profile(d), c);
    double best = std::numeric_limits<double>::infinity();
    for_each_composition(9, 3, [&](std::span<const int> ends) {
      std::vector<Block> blocks;
      int start = 0;
      for (int e : ends) {
        blocks.push_back({start, e});
        start = e + 1;
      }
      best = std::min(best, oracle_cost(d, blocks, c));
    });
    CHECK(dp.cost == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("variance-only cost does not increase with K") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const DiffProfile p = make_profile(random_profile(rng, 10));
    double prev = std::numeric_limits<double>::infinity();
    for (int K = 1; K <= 10; ++K) {
      const double c = optimal_partition(p, cfg_of(K, 0.0)).cost;
      CHECK(c <= prev + 1e-12);
      prev = c;
    }
  }
}

TEST_CASE("swapping equal adjacent values keeps the cost") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto d = random_profile(rng, 8);
    d[4] = d[3];
    const double before = optimal_partition(make_profile(d), cfg_of(3, 1.0)).cost;
    std::swap(d[3], d[4]);
    CHECK(optimal_partition(make_profile(d), cfg_of(3, 1.0)).cost == before);
  }
}

TEST_CASE("tie-break picks the earliest split by default") {
  // d = [1,1,1] with K = 2, lambda = 0: both splits cost 0
  const BlockPartition first = optimal_partition(make_profile({1, 1, 1}), cfg_of(2, 0.0));
  CHECK(first.blocks == std::vector<Block>{{0, 0}, {1, 2}});
  PartitionConfig balanced = cfg_of(2, 0.0);
  balanced.tie_break = TieBreak::kMostBalanced;
  const BlockPartition b = optimal_partition(make_profile({1, 1, 1, 1}), balanced);
  CHECK(b.blocks == std::vector<Block>{{0, 1}, {2, 3}});
  CHECK(b.cost == 0.0);
}

TEST_CASE("boundary blocks") {
  const TensorMap m = testing::fixture_model(6, 1);
  const LayerIndex idx = infer_layer_index(m, "layers.{n}.");
  const BlockPartition p = attach_boundary_blocks(optimal_partition(make_profile({1, 2, 3, 4, 5, 6}), cfg_of(6, 1.0)), idx);
  CHECK(p.decision_dimension() == 8);

  TensorMap no_head;
  no_head.add({"embed", {1}, {0}});
  for (int l = 0; l < 6; ++l) no_head.add({"layers." + std::to_string(l) + ".w", {1}, {0}});
  const BlockPartition emb_only =
      attach_boundary_blocks(optimal_partition(make_profile({1, 2, 3, 4, 5, 6}), cfg_of(6, 1.0)),
                             infer_layer_index(no_head, "layers.{n}."));
  CHECK(emb_only.decision_dimension() == 7);

  const TensorMap plain = testing::fixture_model(3, 1, false);
  const BlockPartition raw = optimal_partition(make_profile({1, 2, 3}), cfg_of(2, 1.0));
  const BlockPartition same = attach_boundary_blocks(raw, infer_layer_index(plain, "layers.{n}."));
  CHECK(same.blocks == raw.blocks);
  CHECK(same.decision_dimension() == 2);
}

TEST_CASE("tensor block columns follow embedding, blocks, head") {
  const TensorMap m = testing::fixture_model(4, 1);
  const LayerIndex idx = infer_layer_index(m, "layers.{n}.");
  const BlockPartition p = attach_boundary_blocks(optimal_partition(make_profile({1, 1, 1, 1}), cfg_of(2, 1.0)), idx);
  std::map<std::string, int> col;
  for (const auto& [name, c] : tensor_block_columns(p, idx)) col[name] = c;
  CHECK(col.at("embed.weight") == 0);
  CHECK(col.at("layers.1.mlp.w") == 1);
  CHECK(col.at("layers.2.attn.w") == 2);
  CHECK(col.at("head.weight") == 3);
  CHECK(col.size() == m.size());
}

TEST_CASE("partition json round trip") {
  const DiffProfile d = make_profile({0.5, 2, 1, 3});
  const BlockPartition p = optimal_partition(d, cfg_of(2, 1.0));
  const auto j = partition_to_json(d, cfg_of(2, 1.0), p);
  CHECK(j.at("K") == 2);
  CHECK(j.at("norm_order") == 2);
  const BlockPartition back = partition_from_json(j);
  CHECK(back.blocks == p.blocks);
  CHECK(back.cost == p.cost);
}

TEST_CASE("L = 80, K = 8 runs fast") {
  std::mt19937_64 rng(1);
  const DiffProfile p = make_profile(random_profile(rng, 80));
  const auto t0 = std::chrono::steady_clock::now();
  const BlockPartition part = optimal_partition(p, cfg_of(8, 1.0));
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  CHECK(part.blocks.size() == 8);
  CHECK(ms < 100.0);
}

}
