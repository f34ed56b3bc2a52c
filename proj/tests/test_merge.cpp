#include <doctest.h>

#include "blockmerge/errors.hpp"
#include "blockmerge/merge.hpp"
#include "support.hpp"

using namespace blockmerge;
using testing::bit_equal;
using testing::fixture_model;

namespace {

struct Fixture {
  std::vector<TensorMap> models{fixture_model(6, 21), fixture_model(6, 22)};
  TensorMap base = fixture_model(6, 23);
  LayerIndex index = infer_layer_index(models[0], "layers.{n}.");
  BlockPartition partition;

  Fixture() {
    PartitionConfig c;
    c.blocks = 3;
    partition = attach_boundary_blocks(
        optimal_partition(compute_layer_diffs(models, &base, index, 2).normalized(), c), index);
  }

  TensorMap at(std::vector<double> x) const {
    return block_wise_merge(models, &base, partition, index, decision_vector_to_weights(x, x.size()));
  }
};

TensorMap single(std::vector<float> v) {
  TensorMap m;
  m.add({"w", {v.size()}, std::move(v)});
  return m;
}

MergeRecipe recipe(MergeStrategy s) {
  MergeRecipe r;
  r.strategy = s;
  return r;
}

std::vector<float> values(const TensorMap& m) { return m.entries().front().data; }

}  // namespace

TEST_SUITE("merge") {

TEST_CASE("all-ones decision reproduces model A exactly") {
  const Fixture f;
  CHECK(f.partition.decision_dimension() == 5);
  CHECK(bit_equal(f.at(std::vector<double>(5, 1.0)), f.models[0]));
  CHECK(bit_equal(f.at(std::vector<double>(5, 0.0)), f.models[1]));
}

TEST_CASE("identical models merge to themselves") {
  const TensorMap a = fixture_model(4, 5);
  const std::vector<TensorMap> models{a, a};
  const LayerIndex idx = infer_layer_index(a, "layers.{n}.");
  PartitionConfig c;
  c.blocks = 2;
  const BlockPartition p = attach_boundary_blocks(optimal_partition(make_profile({1, 1, 1, 1}), c), idx);
  const std::vector<double> x{0.5, 0.25, 0.125, 1.0};
  const TensorMap out = block_wise_merge(models, nullptr, p, idx, decision_vector_to_weights(x, 4));
  CHECK(bit_equal(out, a));
}

TEST_CASE("one-block hand example") {
  TensorMap a, b;
  a.add({"layers.0.w", {2}, {0, 2}});
  b.add({"layers.0.w", {2}, {2, 0}});
  const std::vector<TensorMap> models{a, b};
  const LayerIndex idx = infer_layer_index(a, "layers.{n}.");
  PartitionConfig c;
  c.blocks = 1;
  const BlockPartition p = optimal_partition(make_profile({1}), c);
  const std::vector<double> x{0.25};
  const TensorMap out = block_wise_merge(models, nullptr, p, idx, decision_vector_to_weights(x, 1));
  CHECK(values(out) == std::vector<float>{1.5f, 0.5f});
}

TEST_CASE("swapping models and x <-> 1-x is exact") {
  const Fixture f;
  const std::vector<double> x{0.1, 0.7, 0.33, 0.9, 0.5};
  std::vector<double> flipped;
  for (double v : x) flipped.push_back(1.0 - v);
  const std::vector<TensorMap> swapped{f.models[1], f.models[0]};
  const TensorMap out = block_wise_merge(swapped, nullptr, f.partition, f.index,
                                         decision_vector_to_weights(flipped, flipped.size()));
  TensorMap expect = f.at(x);
  expect.metadata() = out.metadata();
  CHECK(bit_equal(out, expect));
}

TEST_CASE("one block equals whole-model interpolation") {
  const TensorMap a = fixture_model(3, 1, false);
  const TensorMap b = fixture_model(3, 2, false);
  const std::vector<TensorMap> models{a, b};
  const LayerIndex idx = infer_layer_index(a, "layers.{n}.");
  PartitionConfig c;
  c.blocks = 1;
  const BlockPartition p = optimal_partition(make_profile({1, 1, 1}), c);
  const std::vector<double> x{0.3};
  const TensorMap out = block_wise_merge(models, nullptr, p, idx, decision_vector_to_weights(x, 1));
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (std::size_t e = 0; e < a.entries()[t].data.size(); ++e) {
      const double expect = 0.3 * a.entries()[t].data[e] + 0.7 * b.entries()[t].data[e];
      CHECK(out.entries()[t].data[e] == static_cast<float>(expect));
    }
  }
}

TEST_CASE("task-arithmetic block weights") {
  TensorMap base, a, b;
  base.add({"layers.0.w", {2}, {1, 1}});
  a.add({"layers.0.w", {2}, {3, 1}});
  b.add({"layers.0.w", {2}, {1, 5}});
  const std::vector<TensorMap> models{a, b};
  const LayerIndex idx = infer_layer_index(a, "layers.{n}.");
  PartitionConfig c;
  c.blocks = 1;
  const BlockPartition p = optimal_partition(make_profile({1}), c);
  BlockWeights w;
  w.mode = WeightMode::kTaskArithmetic;
  w.values = {{0.5}, {0.25}};
  CHECK(values(block_wise_merge(models, &base, p, idx, w)) == std::vector<float>{2.0f, 2.0f});
  CHECK_THROWS_AS(block_wise_merge(models, nullptr, p, idx, w), ConfigError);
  w.values = {{1.5}, {0.0}};
  CHECK_THROWS_AS(block_wise_merge(models, &base, p, idx, w), ConstraintError);
}

TEST_CASE("weight validation") {
  const Fixture f;
  BlockWeights w = decision_vector_to_weights(std::vector<double>(5, 0.5), 5);
  w.values[0][2] = 0.6;
  CHECK_THROWS_AS(block_wise_merge(f.models, nullptr, f.partition, f.index, w), ConstraintError);
  w.values[0][2] = 0.5 + 5e-7;
  CHECK_NOTHROW(validate_weights(w, 2, 5));
  CHECK_THROWS_AS(validate_weights(decision_vector_to_weights(std::vector<double>(4, 0.5), 4), 2, 5), ArityError);
  CHECK_THROWS_AS(validate_weights(w, 3, 5), ArityError);
}

TEST_CASE("decision vector to weights") {
  const std::vector<double> x{0.25};
  const BlockWeights w = decision_vector_to_weights(x, 1);
  CHECK(w.values == std::vector<std::vector<double>>{{0.25}, {0.75}});
  const std::vector<double> half(3, 0.5);
  CHECK(decision_vector_to_weights(half, 3).values[1] == std::vector<double>(3, 0.5));
  const std::vector<double> bad{1.2};
  CHECK_THROWS_AS(decision_vector_to_weights(bad, 1), DomainError);
  CHECK_THROWS_AS(decision_vector_to_weights(half, 2), ArityError);
}

TEST_CASE("task arithmetic with one model and alpha 1 is that model") {
  const TensorMap base = single({1.0f, -2.0f, 0.5f});
  const TensorMap m = single({1.5f, 4.0f, -0.25f});
  const std::vector<TensorMap> models{m};
  CHECK(bit_equal(merge_model_level(models, base, recipe(MergeStrategy::kTaskArithmetic)), m));
}

TEST_CASE("TIES hand example") {
  const TensorMap base = single({0, 0});
  const std::vector<TensorMap> models{single({3, -1}), single({2, 4})};
  MergeRecipe r = recipe(MergeStrategy::kTies);
  r.top_k_fraction = 0.5;
  CHECK(values(merge_model_level(models, base, r)) == std::vector<float>{3, 4});
  r.alpha = 0.5;
  CHECK(values(merge_model_level(models, base, r)) == std::vector<float>{1.5, 2});
}

TEST_CASE("TIES sign election and disjoint mean") {
  const TensorMap base = single({0, 0, 0});
  const std::vector<TensorMap> models{single({2, -3, 1}), single({-1, 1, -1}), single({4, 1, 0})};
  MergeRecipe r = recipe(MergeStrategy::kTies);
  r.top_k_fraction = 1.0;
  // sums: 5 (+) -> mean(2,4)=3; -1 (-) -> -3; 0 (tie, +) -> 1
  CHECK(values(merge_model_level(models, base, r)) == std::vector<float>{3, -3, 1});
}

TEST_CASE("bit-exact identities on fixture models") {
  const Fixture f;
  const TensorMap ta = merge_model_level(f.models, f.base, recipe(MergeStrategy::kTaskArithmetic));

  MergeRecipe dare = recipe(MergeStrategy::kDareTa);
  dare.drop_p = 0.0;
  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    dare.seed = seed;
    CHECK(bit_equal(merge_model_level(f.models, f.base, dare), ta));
  }

  MergeRecipe ties = recipe(MergeStrategy::kTies);
  ties.top_k_fraction = 1.0;
  const std::vector<TensorMap> one{f.models[0]};
  CHECK(bit_equal(merge_model_level(one, f.base, ties),
                  merge_model_level(one, f.base, recipe(MergeStrategy::kTaskArithmetic))));

  MergeRecipe crumbs = recipe(MergeStrategy::kBreadcrumbs);
  crumbs.mask_low_pct = 0.0;
  crumbs.mask_high_pct = 1.0;
  CHECK(bit_equal(merge_model_level(f.models, f.base, crumbs), ta));

  for (auto s : {MergeStrategy::kTaskArithmetic, MergeStrategy::kTies, MergeStrategy::kDareTies,
                 MergeStrategy::kDareTa, MergeStrategy::kBreadcrumbs}) {
    MergeRecipe r = recipe(s);
    r.alpha = 0.0;
    TensorMap out = merge_model_level(f.models, f.base, r);
    CHECK(bit_equal(out, f.base));
  }
  MergeRecipe della = recipe(MergeStrategy::kDella);
  della.della_lambda = 0.0;
  CHECK(bit_equal(merge_model_level(f.models, f.base, della), f.base));
}

TEST_CASE("DARE is seeded and rescales survivors") {
  const TensorMap base = single(std::vector<float>(1000, 0.0f));
  const std::vector<TensorMap> models{single(std::vector<float>(1000, 1.0f))};
  MergeRecipe r = recipe(MergeStrategy::kDareTa);
  r.drop_p = 0.3;
  r.seed = 5;
  const auto a = values(merge_model_level(models, base, r));
  CHECK(a == values(merge_model_level(models, base, r)));
  int kept = 0;
  for (float v : a) {
    CHECK((v == 0.0f || v == static_cast<float>(1.0 / 0.7)));
    kept += v != 0.0f;
  }
  CHECK(kept > 620);
  CHECK(kept < 780);
  r.seed = 6;
  CHECK(a != values(merge_model_level(models, base, r)));
  r.drop_p = 1.0;
  CHECK_THROWS_AS(merge_model_level(models, base, r), DegenerateError);
}

TEST_CASE("DARE drops do not depend on tensor order") {
  TensorMap base1, base2, m1, m2;
  base1.add({"x", {4}, {0, 0, 0, 0}});
  base1.add({"y", {4}, {0, 0, 0, 0}});
  base2.add({"y", {4}, {0, 0, 0, 0}});
  base2.add({"x", {4}, {0, 0, 0, 0}});
  m1.add({"x", {4}, {1, 2, 3, 4}});
  m1.add({"y", {4}, {5, 6, 7, 8}});
  m2.add({"y", {4}, {5, 6, 7, 8}});
  m2.add({"x", {4}, {1, 2, 3, 4}});
  MergeRecipe r = recipe(MergeStrategy::kDareTa);
  r.seed = 17;
  const std::vector<TensorMap> a{m1}, b{m2};
  const TensorMap o1 = merge_model_level(a, base1, r);
  const TensorMap o2 = merge_model_level(b, base2, r);
  CHECK(o1.at("x").data == o2.at("x").data);
  CHECK(o1.at("y").data == o2.at("y").data);
}

TEST_CASE("Breadcrumbs keeps the middle of the magnitude distribution") {
  std::vector<float> tv;
  for (int i = 1; i <= 10; ++i) tv.push_back(static_cast<float>(i % 2 ? i : -i));
  const TensorMap base = single(std::vector<float>(10, 0.0f));
  const std::vector<TensorMap> models{single(tv)};
  MergeRecipe r = recipe(MergeStrategy::kBreadcrumbs);
  r.mask_low_pct = 0.2;
  r.mask_high_pct = 0.8;
  const auto out = values(merge_model_level(models, base, r));
  // mid-rank percentiles 0.05..0.95: ranks 2..7 (magnitudes 3..8) survive
  for (int i = 0; i < 10; ++i) {
    const int mag = i + 1;
    CHECK(out[static_cast<std::size_t>(i)] == (mag >= 3 && mag <= 8 ? tv[static_cast<std::size_t>(i)] : 0.0f));
  }
}

TEST_CASE("DELLA drops small magnitudes more often") {
  const std::size_t n = 4000;
  std::vector<float> tv(n);
  for (std::size_t e = 0; e < n; ++e) tv[e] = static_cast<float>(e + 1);
  const TensorMap base = single(std::vector<float>(n, 0.0f));
  const std::vector<TensorMap> models{single(tv)};
  MergeRecipe r = recipe(MergeStrategy::kDella);
  r.della_p = 0.5;
  r.della_epsilon = 0.3;
  r.seed = 3;
  const auto out = values(merge_model_level(models, base, r));
  std::size_t kept_low = 0, kept_high = 0;
  for (std::size_t e = 0; e < n / 4; ++e) kept_low += out[e] != 0.0f;
  for (std::size_t e = 3 * n / 4; e < n; ++e) kept_high += out[e] != 0.0f;
  CHECK(kept_high > kept_low + n / 10);
  CHECK(out == values(merge_model_level(models, base, r)));
}

TEST_CASE("DARE-TIES without drops equals TIES") {
  const Fixture f;
  MergeRecipe a = recipe(MergeStrategy::kDareTies);
  a.drop_p = 0.0;
  MergeRecipe b = recipe(MergeStrategy::kTies);
  CHECK(bit_equal(merge_model_level(f.models, f.base, a), merge_model_level(f.models, f.base, b)));
}

TEST_CASE("recipe validation and names") {
  MergeRecipe r;
  r.mask_low_pct = 0.9;
  r.mask_high_pct = 0.1;
  CHECK_THROWS_AS(validate_recipe(r), ConfigError);
  CHECK_THROWS_AS(parse_strategy("slerp"), ConfigError);
  for (auto s : {MergeStrategy::kBlockWise, MergeStrategy::kTaskArithmetic, MergeStrategy::kTies,
                 MergeStrategy::kDareTies, MergeStrategy::kDareTa, MergeStrategy::kBreadcrumbs, MergeStrategy::kDella}) {
    CHECK(parse_strategy(strategy_name(s)) == s);
  }
  MergeRecipe q;
  q.strategy = MergeStrategy::kDella;
  q.seed = 12345678901234ull;
  q.della_p = 0.3;
  const MergeRecipe back = recipe_from_json(recipe_to_json(q));
  CHECK(back.strategy == q.strategy);
  CHECK(back.seed == q.seed);
  CHECK(back.della_p == q.della_p);
}

}
