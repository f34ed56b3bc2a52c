#include "blockmerge/objectives.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "blockmerge/errors.hpp"

namespace blockmerge {

void validate_spec(const ObjectiveSpec& spec) {
  if (spec.benchmarks.empty()) throw ConfigError("objective '" + spec.name + "' has no benchmarks");
  for (const auto& b : spec.benchmarks) {
    auto e = spec.expert_scores.find(b);
    auto s = spec.base_scores.find(b);
    if (e == spec.expert_scores.end() || s == spec.base_scores.end()) {
      throw ConfigError("objective '" + spec.name + "' lacks anchor scores for '" + b + "'");
    }
    if (e->second == s->second) {
      throw DegenerateSpecError("expert and base scores coincide on '" + b + "'");
    }
  }
}

double normalize_objective(const ObjectiveSpec& spec, const RawScores& raw) {
  double total = 0.0;
  for (const auto& b : spec.benchmarks) {
    const double expert = spec.expert_scores.at(b);
    const double base = spec.base_scores.at(b);
    if (expert == base) throw DegenerateSpecError("expert and base scores coincide on '" + b + "'");
    auto it = raw.find(b);
    if (it == raw.end()) throw MissingScoreError("no score for benchmark '" + b + "'");
    total += (it->second - base) / (expert - base);
  }
  return total;
}

SyntheticConflictingEvaluator::SyntheticConflictingEvaluator(std::vector<double> anchor_a,
                                                             std::vector<double> anchor_b)
    : a_(std::move(anchor_a)), b_(std::move(anchor_b)) {
  if (a_.empty() || a_.size() != b_.size()) throw ArityError("anchors must share a positive dimension");
  for (std::size_t j = 0; j < a_.size(); ++j) {
    if (!(a_[j] >= 0.0 && a_[j] <= 1.0 && b_[j] >= 0.0 && b_[j] <= 1.0)) {
      throw DomainError("anchors must lie in [0,1]^D");
    }
  }
  if (a_ == b_) throw DegenerateError("anchors a and b coincide");
}

RawScores SyntheticConflictingEvaluator::score(const TensorMap*, std::span<const double> x) {
  if (x.size() != a_.size()) throw ArityError("decision vector dimension does not match the anchors");
  double da = 0.0;
  double db = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    da += (x[j] - a_[j]) * (x[j] - a_[j]);
    db += (x[j] - b_[j]) * (x[j] - b_[j]);
  }
  const double dim = static_cast<double>(x.size());
  return {{"s1", 1.0 - da / dim}, {"s2", 1.0 - db / dim}};
}

std::string SyntheticConflictingEvaluator::describe() const {
  nlohmann::json j;
  j["type"] = "synthetic";
  j["anchor_a"] = a_;
  j["anchor_b"] = b_;
  return j.dump();
}

std::vector<ObjectiveSpec> SyntheticConflictingEvaluator::default_specs() const {
  return {
      ObjectiveSpec{"f1", Direction::kMaximizeScore, {"s1"}, {{"s1", 1.0}}, {{"s1", 0.0}}},
      ObjectiveSpec{"f2", Direction::kMaximizeScore, {"s2"}, {{"s2", 1.0}}, {{"s2", 0.0}}},
  };
}

std::shared_ptr<SyntheticConflictingEvaluator> synthetic_conflicting_evaluator(
    std::vector<double> anchor_a, std::vector<double> anchor_b) {
  return std::make_shared<SyntheticConflictingEvaluator>(std::move(anchor_a), std::move(anchor_b));
}

double evaluator_timeout_seconds(double fallback) {
  if (const char* env = std::getenv("BLOCKMERGE_EVAL_TIMEOUT")) {
    char* end = nullptr;
    const double v = std::strtod(env, &end);
    if (end != env && v > 0.0) return v;
  }
  return fallback;
}

std::shared_ptr<ExternalCommandEvaluator> external_command_evaluator(std::string command_template,
                                                                     double timeout_seconds) {
  return std::make_shared<ExternalCommandEvaluator>(std::move(command_template),
                                                    std::chrono::duration<double>(timeout_seconds));
}

TensorMap merged_model_for(std::span<const double> x, const EvaluationContext& ctx) {
  if (ctx.models.size() != 2) throw ArityError("decision vectors drive exactly two models");
  BlockWeights w = decision_vector_to_weights(x, static_cast<std::size_t>(ctx.partition.decision_dimension()));
  w.mode = ctx.mode;
  return block_wise_merge(ctx.models, ctx.base ? &*ctx.base : nullptr, ctx.partition, ctx.index, w);
}

namespace {

std::string cache_key(std::span<const double> x, const std::string& digest) {
  std::string key = digest;
  char buf[32];
  for (double v : x) {
    const double rounded = std::round(v * 1e9) / 1e9;
    std::snprintf(buf, sizeof(buf), "|%.9f", rounded == 0.0 ? 0.0 : rounded);
    key += buf;
  }
  return key;
}

}  // namespace

Evaluation evaluate(std::span<const double> x, EvaluationContext& ctx) {
  if (static_cast<int>(x.size()) != ctx.dimension) {
    throw ArityError("decision vector has " + std::to_string(x.size()) + " entries, expected " +
                     std::to_string(ctx.dimension));
  }
  for (double v : x) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("decision variable outside [0,1]");
  }
  if (!ctx.evaluator) throw ConfigError("evaluation context has no evaluator");

  Evaluation out;
  out.x.assign(x.begin(), x.end());
  const auto start = std::chrono::steady_clock::now();
  const std::string key = cache_key(x, ctx.digest);
  if (auto it = ctx.cache.find(key); it != ctx.cache.end()) {
    out.raw = it->second;
    out.cached = true;
  } else {
    try {
      if (ctx.evaluator->needs_model()) {
        const TensorMap merged = merged_model_for(x, ctx);
        out.raw = ctx.evaluator->score(&merged, x);
      } else {
        out.raw = ctx.evaluator->score(nullptr, x);
      }
    } catch (const TimeoutError&) {
      throw;
    } catch (const EvaluationError&) {
      throw;
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw EvaluationError(std::string("evaluator failed: ") + e.what());
    }
    for (const auto& [name, value] : out.raw) {
      if (!std::isfinite(value)) throw InvalidScoreError("benchmark '" + name + "' scored a non-finite value");
    }
    ctx.cache.emplace(key, out.raw);
  }
  out.objectives.reserve(ctx.specs.size());
  for (const auto& spec : ctx.specs) out.objectives.push_back(normalize_objective(spec, out.raw));
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

nlohmann::ordered_json spec_to_json(const ObjectiveSpec& spec) {
  nlohmann::ordered_json j;
  j["name"] = spec.name;
  j["direction"] = spec.direction == Direction::kMaximizeScore ? "maximize-score" : "minimize-score";
  j["benchmarks"] = spec.benchmarks;
  j["expert_scores"] = spec.expert_scores;
  j["base_scores"] = spec.base_scores;
  return j;
}

ObjectiveSpec spec_from_json(const nlohmann::json& j) {
  ObjectiveSpec s;
  try {
    s.name = j.at("name").get<std::string>();
    const std::string dir = j.value("direction", std::string("maximize-score"));
    if (dir == "maximize-score") {
      s.direction = Direction::kMaximizeScore;
    } else if (dir == "minimize-score") {
      s.direction = Direction::kMinimizeScore;
    } else {
      throw ConfigError("unknown objective direction '" + dir + "'");
    }
    s.benchmarks = j.at("benchmarks").get<std::vector<std::string>>();
    s.expert_scores = j.at("expert_scores").get<std::map<std::string, double>>();
    s.base_scores = j.at("base_scores").get<std::map<std::string, double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed objective spec: ") + e.what());
  }
  validate_spec(s);
  return s;
}

}  // namespace blockmerge
