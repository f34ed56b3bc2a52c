#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockmerge/merge.hpp"
#include "blockmerge/partition.hpp"
#include "blockmerge/tensor_store.hpp"

namespace blockmerge {

enum class Direction { kMaximizeScore, kMinimizeScore };

/// One capability: its benchmarks and the anchor scores of the expert and
/// the reference ("base") model on each of them.
struct ObjectiveSpec {
  std::string name;
  Direction direction = Direction::kMaximizeScore;
  std::vector<std::string> benchmarks;
  std::map<std::string, double> expert_scores;
  std::map<std::string, double> base_scores;
};

using RawScores = std::map<std::string, double>;

void validate_spec(const ObjectiveSpec& spec);

/// sum over benchmarks of (s_merge - s_base) / (s_expert - s_base). Applied
/// unchanged to minimize-score capabilities: their expert has the lower
/// score, so the ratio already grows as the merge score falls.
double normalize_objective(const ObjectiveSpec& spec, const RawScores& raw);

/// Black-box scorer of a merged model.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  /// False when scores depend only on the decision vector, which lets the
  /// caller skip building the merged model.
  virtual bool needs_model() const { return true; }
  virtual RawScores score(const TensorMap* merged, std::span<const double> x) = 0;
  /// Stable text identifying the evaluator configuration (for digests).
  virtual std::string describe() const = 0;
};

/// s1(x) = 1 - |x-a|^2/D and s2(x) = 1 - |x-b|^2/D on benchmarks "s1"/"s2".
/// The Pareto set of (s1, s2) is the segment between a and b.
class SyntheticConflictingEvaluator final : public Evaluator {
 public:
  SyntheticConflictingEvaluator(std::vector<double> anchor_a, std::vector<double> anchor_b);

  bool needs_model() const override { return false; }
  RawScores score(const TensorMap* merged, std::span<const double> x) override;
  std::string describe() const override;

  const std::vector<double>& anchor_a() const noexcept { return a_; }
  const std::vector<double>& anchor_b() const noexcept { return b_; }
  /// Objective specs that make f_k equal s_k (base 0, expert 1).
  std::vector<ObjectiveSpec> default_specs() const;

 private:
  std::vector<double> a_;
  std::vector<double> b_;
};

std::shared_ptr<SyntheticConflictingEvaluator> synthetic_conflicting_evaluator(
    std::vector<double> anchor_a, std::vector<double> anchor_b);

/// Runs a shell command per evaluation. `{model}` in the template is replaced
/// by the path of the merged container file and `{output}` by the path the
/// command must write `{"scores": {benchmark: number, ...}}` to.
class ExternalCommandEvaluator final : public Evaluator {
 public:
  ExternalCommandEvaluator(std::string command_template, std::chrono::duration<double> timeout);

  RawScores score(const TensorMap* merged, std::span<const double> x) override;
  std::string describe() const override;

  /// Runs the command against an existing container file.
  RawScores run(const std::filesystem::path& model_path) const;

 private:
  std::string template_;
  std::chrono::duration<double> timeout_;
};

/// Timeout from BLOCKMERGE_EVAL_TIMEOUT (seconds) if set, else `fallback`.
double evaluator_timeout_seconds(double fallback);

std::shared_ptr<ExternalCommandEvaluator> external_command_evaluator(std::string command_template,
                                                                     double timeout_seconds);

/// Everything needed to turn a decision vector into objective values.
struct EvaluationContext {
  std::vector<TensorMap> models;  // model A (x = 1) and model B (x = 0)
  std::optional<TensorMap> base;
  BlockPartition partition;
  LayerIndex index;
  WeightMode mode = WeightMode::kInterpolation;
  std::vector<ObjectiveSpec> specs;
  std::shared_ptr<Evaluator> evaluator;
  int dimension = 0;
  std::string digest;

  std::map<std::string, RawScores> cache;
};

struct Evaluation {
  std::vector<double> x;
  std::vector<double> objectives;  // maximization convention
  RawScores raw;
  double seconds = 0.0;
  bool cached = false;
};

/// Merges per x (when the evaluator needs a model), scores, normalizes.
/// Results are cached by (x rounded to 1e-9, context digest).
Evaluation evaluate(std::span<const double> x, EvaluationContext& ctx);

/// Builds the merged model for decision vector x.
TensorMap merged_model_for(std::span<const double> x, const EvaluationContext& ctx);

nlohmann::ordered_json spec_to_json(const ObjectiveSpec& spec);
ObjectiveSpec spec_from_json(const nlohmann::json& j);

}  // namespace blockmerge
