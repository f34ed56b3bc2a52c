#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "blockmerge/acquisition.hpp"
#include "blockmerge/merge.hpp"
#include "blockmerge/objectives.hpp"
#include "blockmerge/partition.hpp"
#include "blockmerge/selection.hpp"

namespace blockmerge {

struct EvaluatorConfig {
  std::string type = "synthetic";  // "synthetic" | "external"
  std::vector<double> anchor_a;
  std::vector<double> anchor_b;
  std::string command;
  double timeout_seconds = 3600.0;
};

struct RunConfig {
  std::optional<std::string> model_a;
  std::optional<std::string> model_b;
  std::optional<std::string> base_model;
  std::string layer_pattern = "layers.{n}.";
  PartitionConfig partition;
  int norm_order = 2;
  bool normalize_profile = true;
  WeightMode merge_mode = WeightMode::kInterpolation;
  int dimension = 0;  // decision dimension when no models are given
  std::vector<ObjectiveSpec> objectives;
  EvaluatorConfig evaluator;
  int n_init = 8;
  int iterations = 20;
  int batch_size = 4;
  std::uint64_t seed = 0;
  int acq_mc_samples = 128;
  int acq_sobol_probes = 1024;
  int acq_restarts = 4;
  int acq_iterations = 30;
  int gp_restarts = 8;
  int gp_max_iterations = 200;
  int das_dennis_divisions = 10;
  int top_k = 3;
  std::string output_dir;
};

void validate_config(const RunConfig& cfg);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
/// SHA-256 over the canonical config JSON, output directory excluded.
std::string config_digest(const RunConfig& cfg);

struct Observation {
  std::vector<double> x;
  std::vector<double> objectives;
  RawScores raw;
  int iteration = 0;  // 0 = warm start
  double elapsed_seconds = 0.0;
};

struct IterationRecord {
  int iteration = 0;
  std::vector<double> reference_point;
  double hypervolume = 0.0;
  std::vector<std::size_t> pareto_indices;
  double acquisition_value = 0.0;
  double best_probe_value = 0.0;
  nlohmann::ordered_json gp = nlohmann::ordered_json::array();
};

struct RunState {
  RunConfig config;
  std::string config_digest;
  int dimension = 0;
  std::optional<nlohmann::ordered_json> partition;  // partition.json document
  std::vector<std::uint64_t> seed_chain;            // [run seed, warm start, iteration 1..T]
  int completed_iterations = 0;
  bool finished = false;
  std::vector<Observation> observations;
  std::vector<IterationRecord> iterations;
  std::vector<double> final_reference;
  std::vector<double> hv_fixed_reference;  // HV after each iteration against final_reference
  std::string created_at;
  std::string updated_at;

  std::vector<Point> objective_vectors() const;
  Eigen::MatrixXd inputs() const;
};

inline constexpr int kStateSchemaVersion = 1;

nlohmann::ordered_json state_to_json(const RunState& state);
RunState state_from_json(const nlohmann::ordered_json& j);
RunState load_state(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames over `path`.
void save_state_atomic(const RunState& state, const std::filesystem::path& path);
/// Copy of a state document with timestamps and timings removed.
nlohmann::ordered_json strip_volatile(nlohmann::ordered_json state_json);

/// Rows 0..2 are all-0, all-1 and all-0.5 (model B, model A, even blend);
/// the remaining rows are distinct scrambled Sobol points.
Eigen::MatrixXd warm_start(int n_init, int dimension, std::uint64_t seed);

struct RunOptions {
  /// Stop (as if killed) after this many completed BO iterations.
  std::optional<int> stop_after_iteration;
  /// Replaces the evaluator built from the config.
  std::shared_ptr<Evaluator> evaluator_override;
  /// Skip writing front/selection/trace files at the end.
  bool write_outputs = true;
};

/// Loads models, partitions layers, builds the evaluator.
EvaluationContext build_context(const RunConfig& cfg, std::optional<nlohmann::ordered_json>* partition_doc = nullptr,
                                std::shared_ptr<Evaluator> evaluator_override = nullptr);

/// Warm start, then `iterations` rounds of fit GPs -> maximize qEHVI ->
/// evaluate q candidates. State is persisted to <output_dir>/state.json after
/// every batch.
RunState run(const RunConfig& cfg, const RunOptions& options = {});

/// Continues a persisted run. When `expected` is given its digest must match
/// the state's.
RunState resume_run(const std::filesystem::path& state_path, const RunConfig* expected = nullptr,
                    const RunOptions& options = {});

ParetoFront final_front(const RunState& state);

/// front.json, selection.json, hv_trace.csv and (when known) partition.json.
void write_run_outputs(const RunState& state, const std::filesystem::path& dir);
/// hv_trace.csv, layer_diffs.csv and front_scatter.csv for plotting.
void write_report(const RunState& state, const std::filesystem::path& dir);

nlohmann::ordered_json front_to_json(const RunState& state, const ParetoFront& front);
nlohmann::ordered_json selection_to_json(const Selection& sel, const std::vector<ObjectiveSpec>& specs,
                                         int divisions, std::size_t top_k);

}  // namespace blockmerge
