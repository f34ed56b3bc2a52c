// blockmerge command-line front end.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "blockmerge/digest.hpp"
#include "blockmerge/driver.hpp"
#include "blockmerge/errors.hpp"
#include "blockmerge/merge.hpp"
#include "blockmerge/partition.hpp"
#include "blockmerge/selection.hpp"
#include "blockmerge/tensor_store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace blockmerge;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

fs::path resolve(const fs::path& p, const fs::path& dir) {
  return p.is_absolute() || dir.empty() ? p : dir / p;
}

// --- partition ---------------------------------------------------------------

struct PartitionArgs {
  std::string model_a, model_b, base, pattern = "layers.{n}.", norm = "l2", out = "partition.json";
  std::string tie_break = "smallest-split";
  int blocks = 6;
  double lambda = 1.0;
  double variance_weight = 1.0;
  bool raw_profile = false;
  std::uint64_t seed = 0;
};

int cmd_partition(const PartitionArgs& a) {
  std::vector<TensorMap> models{load_tensor_map(a.model_a), load_tensor_map(a.model_b)};
  std::optional<TensorMap> base;
  if (!a.base.empty()) base = load_tensor_map(a.base);
  require_compatible(models[0], models[1], "model B");
  const LayerIndex index = infer_layer_index(models[0], a.pattern);
  const int p = a.norm == "l1" ? 1 : 2;
  DiffProfile profile = compute_layer_diffs(models, base ? &*base : nullptr, index, p);
  if (!a.raw_profile) profile = profile.normalized();
  PartitionConfig cfg{a.blocks, a.lambda, a.variance_weight,
                      a.tie_break == "most-balanced" ? TieBreak::kMostBalanced : TieBreak::kSmallestSplit};
  const BlockPartition part = attach_boundary_blocks(optimal_partition(profile, cfg), index);
  write_json(a.out, partition_to_json(profile, cfg, part));
  std::cout << "partition: " << part.blocks.size() << " attention blocks, decision dimension "
            << part.decision_dimension() << ", cost " << part.cost << '\n';
  return 0;
}

// --- merge -------------------------------------------------------------------

struct MergeArgs {
  std::string recipe, out;
  std::optional<std::uint64_t> seed;
};

int cmd_merge(const MergeArgs& a) {
  const fs::path recipe_path = a.recipe;
  const fs::path dir = recipe_path.parent_path();
  const json doc = read_json(recipe_path);
  MergeRecipe recipe;
  std::vector<fs::path> model_paths;
  std::optional<fs::path> base_path;
  try {
    recipe = recipe_from_json(doc);
    for (const auto& m : doc.at("models")) model_paths.push_back(resolve(m.get<std::string>(), dir));
    if (doc.contains("base") && !doc["base"].is_null()) base_path = resolve(doc["base"].get<std::string>(), dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed recipe: ") + e.what());
  }
  if (a.seed) recipe.seed = *a.seed;

  std::vector<TensorMap> models;
  for (const auto& p : model_paths) models.push_back(load_tensor_map(p));
  std::optional<TensorMap> base;
  if (base_path) base = load_tensor_map(*base_path);

  ordered_json manifest;
  manifest["recipe"] = recipe_to_json(recipe);
  manifest["seed"] = recipe.seed;

  TensorMap merged;
  if (recipe.strategy == MergeStrategy::kBlockWise) {
    BlockPartition part;
    LayerIndex index;
    BlockWeights weights;
    try {
      const json& pj = doc.at("partition");
      part = partition_from_json(pj.is_string() ? read_json(resolve(pj.get<std::string>(), dir)) : pj);
      index = infer_layer_index(models.at(0), doc.value("layer_pattern", std::string("layers.{n}.")));
      const std::string mode = doc.value("mode", std::string("interpolation"));
      if (doc.contains("x")) {
        const auto x = doc["x"].get<std::vector<double>>();
        weights = decision_vector_to_weights(x, static_cast<std::size_t>(part.decision_dimension()));
      } else {
        weights.values = doc.at("weights").get<std::vector<std::vector<double>>>();
      }
      if (mode == "task-arithmetic") {
        weights.mode = WeightMode::kTaskArithmetic;
        weights.max_weight = doc.value("max_weight", 1.0);
      } else if (mode != "interpolation") {
        throw ConfigError("unknown mode '" + mode + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed block-wise recipe: ") + e.what());
    }
    merged = block_wise_merge(models, base ? &*base : nullptr, part, index, weights);
    manifest["weights"] = weights.values;
    manifest["mode"] = weights.mode == WeightMode::kInterpolation ? "interpolation" : "task-arithmetic";
  } else {
    if (!base) throw ConfigError("strategy '" + strategy_name(recipe.strategy) + "' needs a base model");
    merged = merge_model_level(models, *base, recipe);
  }

  const fs::path out = a.out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_tensor_map(merged, out);

  ordered_json inputs = ordered_json::array();
  for (const auto& p : model_paths) inputs.push_back({{"path", p.string()}, {"sha256", file_sha256_hex(p)}});
  manifest["inputs"] = inputs;
  manifest["base"] = base_path ? ordered_json{{"path", base_path->string()}, {"sha256", file_sha256_hex(*base_path)}}
                               : ordered_json(nullptr);
  manifest["output"] = {{"path", out.string()}, {"sha256", file_sha256_hex(out)}};
  write_json(out.parent_path() / "merge_manifest.json", manifest);
  std::cout << "wrote " << out.string() << '\n';
  return 0;
}

// --- optimize / resume ---------------------------------------------------------

void print_summary(const RunState& state) {
  const ParetoFront front = final_front(state);
  std::cout << "evaluations: " << state.observations.size() << ", iterations: " << state.completed_iterations
            << ", front size: " << front.size();
  if (!state.iterations.empty()) std::cout << ", hypervolume: " << state.iterations.back().hypervolume;
  std::cout << '\n';
}

struct OptimizeArgs {
  std::string config, out_dir;
  std::optional<std::uint64_t> seed;
};

int cmd_optimize(const OptimizeArgs& a) {
  const fs::path cfg_path = a.config;
  const fs::path dir = fs::absolute(cfg_path).parent_path();
  RunConfig cfg = load_config(cfg_path);
  auto fix = [&](std::optional<std::string>& p) {
    if (p) p = resolve(*p, dir).string();
  };
  fix(cfg.model_a);
  fix(cfg.model_b);
  fix(cfg.base_model);
  if (a.seed) cfg.seed = *a.seed;
  if (!a.out_dir.empty()) {
    cfg.output_dir = fs::absolute(a.out_dir).string();
  } else if (cfg.output_dir.empty()) {
    throw ConfigError("no output directory: pass --out-dir or set output_dir");
  } else {
    cfg.output_dir = resolve(cfg.output_dir, dir).string();
  }
  print_summary(run(cfg));
  return 0;
}

int cmd_resume(const std::string& state_path) {
  print_summary(resume_run(fs::absolute(state_path)));
  return 0;
}

// --- select / report -----------------------------------------------------------

struct SelectArgs {
  std::string front, out;
  int divisions = 10;
  int top_k = 3;
};

int cmd_select(const SelectArgs& a) {
  const json doc = read_json(a.front);
  ParetoFront front;
  try {
    for (const auto& m : doc.at("members")) {
      front.points.push_back(m.at("objectives").get<std::vector<double>>());
      front.indices.push_back(m.at("index").get<std::size_t>());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed front file: ") + e.what());
  }
  if (front.empty()) throw EmptyFrontError("front file has no members");
  if (a.top_k < 1 || a.divisions < 1) throw ConfigError("--divisions and --top-k must be >= 1");
  const auto prefs = das_dennis(static_cast<int>(front.points.front().size()), a.divisions);
  const Selection sel = select_solutions(front, prefs, static_cast<std::size_t>(a.top_k));
  const ordered_json out = selection_to_json(sel, {}, a.divisions, static_cast<std::size_t>(a.top_k));
  if (a.out.empty()) {
    std::cout << out.dump(2) << '\n';
  } else {
    write_json(a.out, out);
  }
  return 0;
}

int cmd_report(const std::string& state_path, const std::string& out_dir) {
  const RunState state = load_state(state_path);
  write_report(state, out_dir);
  std::cout << "wrote report to " << out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block-wise model merging with multi-objective Bayesian optimization"};
  app.require_subcommand(1);

  PartitionArgs pa;
  auto* part = app.add_subcommand("partition", "Partition layers into blocks");
  part->add_option("--model-a", pa.model_a)->required();
  part->add_option("--model-b", pa.model_b)->required();
  part->add_option("--base", pa.base);
  part->add_option("--layer-pattern", pa.pattern);
  part->add_option("--blocks", pa.blocks)->check(CLI::PositiveNumber);
  part->add_option("--lambda", pa.lambda)->check(CLI::NonNegativeNumber);
  part->add_option("--variance-weight", pa.variance_weight)->check(CLI::NonNegativeNumber);
  part->add_option("--norm", pa.norm)->check(CLI::IsMember({"l1", "l2"}));
  part->add_option("--tie-break", pa.tie_break)->check(CLI::IsMember({"smallest-split", "most-balanced"}));
  part->add_flag("--raw-profile", pa.raw_profile, "Skip rescaling the profile to total L");
  part->add_option("--out", pa.out);
  part->add_option("--seed", pa.seed, "Accepted for uniformity; partitioning is deterministic");

  MergeArgs ma;
  auto* merge = app.add_subcommand("merge", "Merge models from a recipe");
  merge->add_option("--recipe", ma.recipe)->required();
  merge->add_option("--out", ma.out)->required();
  merge->add_option("--seed", ma.seed, "Overrides the recipe seed");

  OptimizeArgs oa;
  auto* opt = app.add_subcommand("optimize", "Run the Bayesian optimization loop");
  opt->add_option("--config", oa.config)->required();
  opt->add_option("--out-dir", oa.out_dir);
  opt->add_option("--seed", oa.seed, "Overrides the config seed");

  std::string resume_state;
  auto* res = app.add_subcommand("resume", "Continue an interrupted run");
  res->add_option("--state", resume_state)->required();

  SelectArgs sa;
  auto* sel = app.add_subcommand("select", "Pick solutions from a front by preference");
  sel->add_option("--front", sa.front)->required();
  sel->add_option("--divisions", sa.divisions);
  sel->add_option("--top-k", sa.top_k);
  sel->add_option("--out", sa.out);

  std::string report_state, report_dir;
  auto* rep = app.add_subcommand("report", "Write CSV traces for plotting");
  rep->add_option("--state", report_state)->required();
  rep->add_option("--out-dir", report_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*part) return cmd_partition(pa);
    if (*merge) return cmd_merge(ma);
    if (*opt) return cmd_optimize(oa);
    if (*res) return cmd_resume(resume_state);
    if (*sel) return cmd_select(sa);
    if (*rep) return cmd_report(report_state, report_dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.user_error() ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
