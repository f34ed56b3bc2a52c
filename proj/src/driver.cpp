#include "blockmerge/driver.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "blockmerge/digest.hpp"
#include "blockmerge/errors.hpp"
#include "blockmerge/keyed_rng.hpp"
#include "blockmerge/sobol.hpp"
#include "blockmerge/surrogate.hpp"

namespace blockmerge {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string tie_break_name(TieBreak t) {
  return t == TieBreak::kSmallestSplit ? "smallest-split" : "most-balanced";
}

TieBreak parse_tie_break(const std::string& s) {
  if (s == "smallest-split") return TieBreak::kSmallestSplit;
  if (s == "most-balanced") return TieBreak::kMostBalanced;
  throw ConfigError("unknown tie_break '" + s + "'");
}

std::string mode_name(WeightMode m) {
  return m == WeightMode::kInterpolation ? "interpolation" : "task-arithmetic";
}

WeightMode parse_mode(const std::string& s) {
  if (s == "interpolation") return WeightMode::kInterpolation;
  if (s == "task-arithmetic") return WeightMode::kTaskArithmetic;
  throw ConfigError("unknown merge mode '" + s + "'");
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out << text;
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void validate_config(const RunConfig& cfg) {
  if (cfg.n_init < 3) throw ConfigError("n_init must be >= 3 to hold the three heuristic points");
  if (cfg.iterations < 0) throw ConfigError("iterations must be >= 0");
  if (cfg.batch_size < 1 || cfg.batch_size > 16) throw ConfigError("batch_size must lie in 1..16");
  if (cfg.model_a.has_value() != cfg.model_b.has_value()) throw ConfigError("model_a and model_b go together");
  if (!cfg.model_a && cfg.dimension < 1) throw ConfigError("without models, 'dimension' must be >= 1");
  if (cfg.evaluator.type != "synthetic" && cfg.evaluator.type != "external") {
    throw ConfigError("unknown evaluator type '" + cfg.evaluator.type + "'");
  }
  if (cfg.evaluator.type == "external" && !cfg.model_a) throw ConfigError("external evaluation needs models");
  if (cfg.evaluator.type == "external" && cfg.objectives.empty()) {
    throw ConfigError("external evaluation needs objective specs");
  }
  if (cfg.top_k < 1 || cfg.das_dennis_divisions < 1) throw ConfigError("top_k and divisions must be >= 1");
  if (cfg.acq_mc_samples < 1 || cfg.acq_sobol_probes < 1 || cfg.acq_restarts < 1 || cfg.acq_iterations < 0) {
    throw ConfigError("acquisition budget must be positive");
  }
  if (cfg.gp_restarts < 1 || cfg.gp_max_iterations < 1) throw ConfigError("GP budget must be positive");
  for (const auto& spec : cfg.objectives) validate_spec(spec);
}

ordered_json config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["models"] = {{"a", cfg.model_a ? ordered_json(*cfg.model_a) : ordered_json(nullptr)},
                 {"b", cfg.model_b ? ordered_json(*cfg.model_b) : ordered_json(nullptr)},
                 {"base", cfg.base_model ? ordered_json(*cfg.base_model) : ordered_json(nullptr)}};
  j["layer_pattern"] = cfg.layer_pattern;
  j["partition"] = {{"blocks", cfg.partition.blocks},
                    {"lambda", cfg.partition.lambda},
                    {"variance_weight", cfg.partition.variance_weight},
                    {"norm_order", cfg.norm_order},
                    {"normalize", cfg.normalize_profile},
                    {"tie_break", tie_break_name(cfg.partition.tie_break)}};
  j["merge_mode"] = mode_name(cfg.merge_mode);
  j["dimension"] = cfg.dimension;
  j["objectives"] = ordered_json::array();
  for (const auto& s : cfg.objectives) j["objectives"].push_back(spec_to_json(s));
  ordered_json ev;
  ev["type"] = cfg.evaluator.type;
  if (cfg.evaluator.type == "synthetic") {
    ev["anchor_a"] = cfg.evaluator.anchor_a;
    ev["anchor_b"] = cfg.evaluator.anchor_b;
  } else {
    ev["command"] = cfg.evaluator.command;
    ev["timeout_seconds"] = cfg.evaluator.timeout_seconds;
  }
  j["evaluator"] = ev;
  j["n_init"] = cfg.n_init;
  j["iterations"] = cfg.iterations;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  j["acquisition"] = {{"mc_samples", cfg.acq_mc_samples},
                      {"sobol_probes", cfg.acq_sobol_probes},
                      {"restarts", cfg.acq_restarts},
                      {"iterations", cfg.acq_iterations}};
  j["gp"] = {{"restarts", cfg.gp_restarts}, {"max_iterations", cfg.gp_max_iterations}};
  j["selection"] = {{"divisions", cfg.das_dennis_divisions}, {"top_k", cfg.top_k}};
  j["output_dir"] = cfg.output_dir;
  return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  try {
    if (j.contains("models")) {
      const auto& m = j["models"];
      if (m.contains("a") && !m["a"].is_null()) cfg.model_a = m["a"].get<std::string>();
      if (m.contains("b") && !m["b"].is_null()) cfg.model_b = m["b"].get<std::string>();
      if (m.contains("base") && !m["base"].is_null()) cfg.base_model = m["base"].get<std::string>();
    }
    read_opt(j, "layer_pattern", cfg.layer_pattern);
    if (j.contains("partition")) {
      const auto& p = j["partition"];
      read_opt(p, "blocks", cfg.partition.blocks);
      read_opt(p, "lambda", cfg.partition.lambda);
      read_opt(p, "variance_weight", cfg.partition.variance_weight);
      read_opt(p, "norm_order", cfg.norm_order);
      read_opt(p, "normalize", cfg.normalize_profile);
      if (p.contains("tie_break")) cfg.partition.tie_break = parse_tie_break(p["tie_break"].get<std::string>());
    }
    if (j.contains("merge_mode")) cfg.merge_mode = parse_mode(j["merge_mode"].get<std::string>());
    read_opt(j, "dimension", cfg.dimension);
    if (j.contains("objectives")) {
      for (const auto& s : j["objectives"]) cfg.objectives.push_back(spec_from_json(s));
    }
    if (j.contains("evaluator")) {
      const auto& e = j["evaluator"];
      read_opt(e, "type", cfg.evaluator.type);
      read_opt(e, "anchor_a", cfg.evaluator.anchor_a);
      read_opt(e, "anchor_b", cfg.evaluator.anchor_b);
      read_opt(e, "command", cfg.evaluator.command);
      read_opt(e, "timeout_seconds", cfg.evaluator.timeout_seconds);
    }
    read_opt(j, "n_init", cfg.n_init);
    read_opt(j, "iterations", cfg.iterations);
    read_opt(j, "batch_size", cfg.batch_size);
    read_opt(j, "seed", cfg.seed);
    if (j.contains("acquisition")) {
      const auto& a = j["acquisition"];
      read_opt(a, "mc_samples", cfg.acq_mc_samples);
      read_opt(a, "sobol_probes", cfg.acq_sobol_probes);
      read_opt(a, "restarts", cfg.acq_restarts);
      read_opt(a, "iterations", cfg.acq_iterations);
    }
    if (j.contains("gp")) {
      read_opt(j["gp"], "restarts", cfg.gp_restarts);
      read_opt(j["gp"], "max_iterations", cfg.gp_max_iterations);
    }
    if (j.contains("selection")) {
      read_opt(j["selection"], "divisions", cfg.das_dennis_divisions);
      read_opt(j["selection"], "top_k", cfg.top_k);
    }
    read_opt(j, "output_dir", cfg.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

std::string config_digest(const RunConfig& cfg) {
  ordered_json j = config_to_json(cfg);
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

std::vector<Point> RunState::objective_vectors() const {
  std::vector<Point> Y;
  Y.reserve(observations.size());
  for (const auto& o : observations) Y.push_back(o.objectives);
  return Y;
}

Eigen::MatrixXd RunState::inputs() const {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(observations.size()), dimension);
  for (std::size_t i = 0; i < observations.size(); ++i) {
    for (int d = 0; d < dimension; ++d) X(static_cast<Eigen::Index>(i), d) = observations[i].x[static_cast<std::size_t>(d)];
  }
  return X;
}

ordered_json state_to_json(const RunState& s) {
  ordered_json j;
  j["schema_version"] = kStateSchemaVersion;
  j["config_digest"] = s.config_digest;
  j["config"] = config_to_json(s.config);
  j["config"].erase("output_dir");  // the state file's location decides this
  j["created_at"] = s.created_at;
  j["updated_at"] = s.updated_at;
  j["dimension"] = s.dimension;
  j["partition"] = s.partition ? *s.partition : ordered_json(nullptr);
  j["seed_chain"] = s.seed_chain;
  j["completed_iterations"] = s.completed_iterations;
  j["finished"] = s.finished;
  j["observations"] = ordered_json::array();
  for (std::size_t i = 0; i < s.observations.size(); ++i) {
    const auto& o = s.observations[i];
    ordered_json oj;
    oj["index"] = i;
    oj["iteration"] = o.iteration;
    oj["x"] = o.x;
    oj["objectives"] = o.objectives;
    oj["raw"] = o.raw;
    oj["elapsed_seconds"] = o.elapsed_seconds;
    j["observations"].push_back(std::move(oj));
  }
  j["iterations"] = ordered_json::array();
  for (const auto& r : s.iterations) {
    ordered_json rj;
    rj["iteration"] = r.iteration;
    rj["reference_point"] = r.reference_point;
    rj["hypervolume"] = r.hypervolume;
    rj["pareto_indices"] = r.pareto_indices;
    rj["front_size"] = r.pareto_indices.size();
    rj["acquisition_value"] = r.acquisition_value;
    rj["best_probe_value"] = r.best_probe_value;
    rj["gp"] = r.gp;
    j["iterations"].push_back(std::move(rj));
  }
  j["final_reference"] = s.final_reference;
  j["hv_fixed_reference"] = s.hv_fixed_reference;
  return j;
}

RunState state_from_json(const ordered_json& j) {
  RunState s;
  try {
    if (j.at("schema_version").get<int>() != kStateSchemaVersion) {
      throw ResumeError("unsupported state schema version");
    }
    s.config_digest = j.at("config_digest").get<std::string>();
    s.config = config_from_json(nlohmann::json(j.at("config")));
    s.created_at = j.value("created_at", std::string());
    s.updated_at = j.value("updated_at", std::string());
    s.dimension = j.at("dimension").get<int>();
    if (!j.at("partition").is_null()) s.partition = j.at("partition");
    s.seed_chain = j.at("seed_chain").get<std::vector<std::uint64_t>>();
    s.completed_iterations = j.at("completed_iterations").get<int>();
    s.finished = j.at("finished").get<bool>();
    for (const auto& oj : j.at("observations")) {
      Observation o;
      o.iteration = oj.at("iteration").get<int>();
      o.x = oj.at("x").get<std::vector<double>>();
      o.objectives = oj.at("objectives").get<std::vector<double>>();
      o.raw = oj.at("raw").get<RawScores>();
      o.elapsed_seconds = oj.value("elapsed_seconds", 0.0);
      s.observations.push_back(std::move(o));
    }
    for (const auto& rj : j.at("iterations")) {
      IterationRecord r;
      r.iteration = rj.at("iteration").get<int>();
      r.reference_point = rj.at("reference_point").get<std::vector<double>>();
      r.hypervolume = rj.at("hypervolume").get<double>();
      r.pareto_indices = rj.at("pareto_indices").get<std::vector<std::size_t>>();
      r.acquisition_value = rj.value("acquisition_value", 0.0);
      r.best_probe_value = rj.value("best_probe_value", 0.0);
      r.gp = rj.at("gp");
      s.iterations.push_back(std::move(r));
    }
    s.final_reference = j.value("final_reference", std::vector<double>{});
    s.hv_fixed_reference = j.value("hv_fixed_reference", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw ResumeError(std::string("malformed state document: ") + e.what());
  }
  return s;
}

RunState load_state(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open state '" + path.string() + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ResumeError(std::string("state is not valid JSON: ") + e.what());
  }
  return state_from_json(j);
}

void save_state_atomic(const RunState& state, const std::filesystem::path& path) {
  write_text_atomic(path, state_to_json(state).dump(2) + "\n");
}

ordered_json strip_volatile(ordered_json j) {
  j.erase("created_at");
  j.erase("updated_at");
  if (j.contains("observations")) {
    for (auto& o : j["observations"]) o.erase("elapsed_seconds");
  }
  return j;
}

Eigen::MatrixXd warm_start(int n_init, int dimension, std::uint64_t seed) {
  if (n_init < 3) throw ConfigError("warm start needs n_init >= 3");
  if (dimension < 1) throw DimensionError("decision dimension must be >= 1");
  Eigen::MatrixXd X(n_init, dimension);
  X.row(0).setZero();
  X.row(1).setOnes();
  X.row(2).setConstant(0.5);
  const int wanted = n_init - 3;
  if (wanted == 0) return X;
  // a few spares in case a scrambled point collides with an existing row
  const Eigen::MatrixXd pool = sobol(static_cast<std::size_t>(wanted + 8), dimension, seed);
  int filled = 3;
  for (Eigen::Index p = 0; p < pool.rows() && filled < n_init; ++p) {
    bool duplicate = false;
    for (int r = 0; r < filled && !duplicate; ++r) duplicate = X.row(r) == pool.row(p);
    if (!duplicate) X.row(filled++) = pool.row(p);
  }
  if (filled < n_init) throw NumericalError("could not draw distinct warm-start points");
  return X;
}

EvaluationContext build_context(const RunConfig& cfg, std::optional<ordered_json>* partition_doc,
                                std::shared_ptr<Evaluator> evaluator_override) {
  validate_config(cfg);
  EvaluationContext ctx;
  ctx.mode = cfg.merge_mode;
  if (cfg.model_a) {
    ctx.models.push_back(load_tensor_map(*cfg.model_a));
    ctx.models.push_back(load_tensor_map(*cfg.model_b));
    if (cfg.base_model) ctx.base = load_tensor_map(*cfg.base_model);
    require_compatible(ctx.models[0], ctx.models[1], "model B");
    ctx.index = infer_layer_index(ctx.models[0], cfg.layer_pattern);
    DiffProfile profile = compute_layer_diffs(ctx.models, ctx.base ? &*ctx.base : nullptr, ctx.index, cfg.norm_order);
    if (cfg.normalize_profile) profile = profile.normalized();
    ctx.partition = attach_boundary_blocks(optimal_partition(profile, cfg.partition), ctx.index);
    ctx.dimension = ctx.partition.decision_dimension();
    if (partition_doc) *partition_doc = partition_to_json(profile, cfg.partition, ctx.partition);
  } else {
    ctx.dimension = cfg.dimension;
    if (partition_doc) partition_doc->reset();
  }

  if (evaluator_override) {
    ctx.evaluator = std::move(evaluator_override);
  } else if (cfg.evaluator.type == "synthetic") {
    ctx.evaluator = synthetic_conflicting_evaluator(cfg.evaluator.anchor_a, cfg.evaluator.anchor_b);
  } else {
    ctx.evaluator = external_command_evaluator(cfg.evaluator.command,
                                               evaluator_timeout_seconds(cfg.evaluator.timeout_seconds));
  }
  if (auto* synthetic = dynamic_cast<SyntheticConflictingEvaluator*>(ctx.evaluator.get())) {
    if (static_cast<int>(synthetic->anchor_a().size()) != ctx.dimension) {
      throw ConfigError("synthetic anchors have " + std::to_string(synthetic->anchor_a().size()) +
                        " entries, decision dimension is " + std::to_string(ctx.dimension));
    }
    ctx.specs = cfg.objectives.empty() ? synthetic->default_specs() : cfg.objectives;
  } else {
    ctx.specs = cfg.objectives;
  }
  if (ctx.specs.empty()) throw ConfigError("no objective specs");
  ctx.digest = sha256_hex(config_digest(cfg) + "|" + ctx.evaluator->describe());
  return ctx;
}

namespace {

std::vector<std::uint64_t> make_seed_chain(std::uint64_t seed, int iterations) {
  std::vector<std::uint64_t> chain{seed, derive_seed(seed, 1)};
  for (int t = 1; t <= iterations; ++t) chain.push_back(derive_seed(seed, 100 + static_cast<std::uint64_t>(t)));
  return chain;
}

std::vector<Evaluation> evaluate_batch(const Eigen::MatrixXd& X, EvaluationContext& ctx) {
  std::vector<Evaluation> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    std::vector<double> x(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index d = 0; d < X.cols(); ++d) x[static_cast<std::size_t>(d)] = std::clamp(X(i, d), 0.0, 1.0);
    out.push_back(evaluate(x, ctx));
  }
  return out;
}

void append(RunState& state, std::vector<Evaluation>&& evals, int iteration) {
  for (auto& e : evals) {
    state.observations.push_back({std::move(e.x), std::move(e.objectives), std::move(e.raw), iteration, e.seconds});
  }
}

IterationRecord summarize(const RunState& state, int iteration) {
  IterationRecord r;
  r.iteration = iteration;
  const auto Y = state.objective_vectors();
  const ParetoFront front = pareto_filter(Y);
  const ReferencePoint ref = nadir_reference(Y);
  r.reference_point = ref.r;
  r.hypervolume = hypervolume(front, ref);
  r.pareto_indices = front.indices;
  return r;
}

void persist(RunState& state) {
  if (state.config.output_dir.empty()) return;
  std::filesystem::create_directories(state.config.output_dir);
  state.updated_at = utc_now();
  save_state_atomic(state, std::filesystem::path(state.config.output_dir) / "state.json");
}

void finalize(RunState& state) {
  const auto Y = state.objective_vectors();
  const ReferencePoint ref = nadir_reference(Y);
  state.final_reference = ref.r;
  state.hv_fixed_reference.clear();
  const std::size_t n_init = static_cast<std::size_t>(state.config.n_init);
  const std::size_t q = static_cast<std::size_t>(state.config.batch_size);
  for (int t = 0; t <= state.completed_iterations; ++t) {
    const std::size_t count = n_init + static_cast<std::size_t>(t) * q;
    const std::vector<Point> prefix(Y.begin(), Y.begin() + static_cast<std::ptrdiff_t>(std::min(count, Y.size())));
    state.hv_fixed_reference.push_back(hypervolume_of_points(pareto_filter(prefix).points, ref.r));
  }
  state.finished = true;
}

void continue_run(RunState& state, EvaluationContext& ctx, const RunOptions& options) {
  const RunConfig& cfg = state.config;
  if (state.observations.empty()) {
    const Eigen::MatrixXd X0 = warm_start(cfg.n_init, state.dimension, state.seed_chain.at(1));
    append(state, evaluate_batch(X0, ctx), 0);
    state.iterations.push_back(summarize(state, 0));
    persist(state);
  }

  const std::size_t K = ctx.specs.size();
  while (state.completed_iterations < cfg.iterations) {
    if (options.stop_after_iteration && state.completed_iterations >= *options.stop_after_iteration) return;
    const int t = state.completed_iterations + 1;
    const std::uint64_t iteration_seed = state.seed_chain.at(1 + static_cast<std::size_t>(t));

    const Eigen::MatrixXd X = state.inputs();
    const auto Y = state.objective_vectors();
    std::vector<GPModel> models;
    IterationRecord record;
    for (std::size_t k = 0; k < K; ++k) {
      Eigen::VectorXd y(static_cast<Eigen::Index>(Y.size()));
      for (std::size_t i = 0; i < Y.size(); ++i) y(static_cast<Eigen::Index>(i)) = Y[i][k];
      GPFitOptions fit;
      fit.restarts = cfg.gp_restarts;
      fit.max_iterations = cfg.gp_max_iterations;
      fit.seed = derive_seed(iteration_seed, 20 + k);
      models.push_back(fit_gp(X, y, fit));
      record.gp.push_back(hyperparams_to_json(models.back()));
    }

    const ParetoFront front = pareto_filter(Y);
    const ReferencePoint ref = nadir_reference(Y);
    Eigen::MatrixXd pareto_inputs(static_cast<Eigen::Index>(front.size()), state.dimension);
    for (std::size_t i = 0; i < front.size(); ++i) pareto_inputs.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(front.indices[i]));

    AcquisitionOptions acq;
    acq.q = cfg.batch_size;
    acq.mc_samples = cfg.acq_mc_samples;
    acq.sobol_probes = cfg.acq_sobol_probes;
    acq.restarts = cfg.acq_restarts;
    acq.iterations = cfg.acq_iterations;
    acq.seed = derive_seed(iteration_seed, 30);
    const AcquisitionResult chosen = optimize_acquisition(models, front, ref, pareto_inputs, acq);

    // the whole batch must succeed before anything is recorded
    std::vector<Evaluation> evals = evaluate_batch(chosen.batch, ctx);
    append(state, std::move(evals), t);
    IterationRecord summary = summarize(state, t);
    summary.acquisition_value = chosen.value;
    summary.best_probe_value = chosen.best_probe_value;
    summary.gp = std::move(record.gp);
    state.iterations.push_back(std::move(summary));
    state.completed_iterations = t;
    persist(state);
  }

  finalize(state);
  persist(state);
  if (options.write_outputs && !cfg.output_dir.empty()) write_run_outputs(state, cfg.output_dir);
}

}  // namespace

RunState run(const RunConfig& cfg, const RunOptions& options) {
  RunState state;
  state.config = cfg;
  state.config_digest = config_digest(cfg);
  EvaluationContext ctx = build_context(cfg, &state.partition, options.evaluator_override);
  state.dimension = ctx.dimension;
  state.seed_chain = make_seed_chain(cfg.seed, cfg.iterations);
  state.created_at = utc_now();
  continue_run(state, ctx, options);
  return state;
}

RunState resume_run(const std::filesystem::path& state_path, const RunConfig* expected, const RunOptions& options) {
  RunState state = load_state(state_path);
  if (config_digest(state.config) != state.config_digest) {
    throw ResumeError("state file's config does not match its recorded digest");
  }
  if (expected && config_digest(*expected) != state.config_digest) {
    throw ResumeError("config digest differs from the one recorded in the state file");
  }
  state.config.output_dir = state_path.parent_path().string();
  std::optional<ordered_json> partition_doc;
  EvaluationContext ctx = build_context(state.config, &partition_doc, options.evaluator_override);
  if (ctx.dimension != state.dimension) throw ResumeError("decision dimension changed since the state was written");
  if (partition_doc.has_value() != state.partition.has_value() ||
      (partition_doc && (*partition_doc)["blocks"] != (*state.partition)["blocks"])) {
    throw ResumeError("recomputed partition differs from the recorded one");
  }
  const std::size_t expected_obs = static_cast<std::size_t>(state.config.n_init) +
                                   static_cast<std::size_t>(state.completed_iterations) *
                                       static_cast<std::size_t>(state.config.batch_size);
  if (!state.observations.empty() && state.observations.size() != expected_obs) {
    throw ResumeError("observation count does not match the completed iterations");
  }
  if (state.finished) return state;
  continue_run(state, ctx, options);
  return state;
}

ParetoFront final_front(const RunState& state) { return pareto_filter(state.objective_vectors()); }

ordered_json front_to_json(const RunState& state, const ParetoFront& front) {
  ordered_json j;
  const auto Y = state.objective_vectors();
  const ReferencePoint ref = state.final_reference.empty() ? nadir_reference(Y) : ReferencePoint{state.final_reference};
  j["reference_point"] = ref.r;
  j["hypervolume"] = hypervolume_of_points(front.points, ref.r);
  j["members"] = ordered_json::array();
  for (std::size_t i = 0; i < front.size(); ++i) {
    const auto& o = state.observations[front.indices[i]];
    ordered_json m;
    m["index"] = front.indices[i];
    m["x"] = o.x;
    m["objectives"] = o.objectives;
    m["raw"] = o.raw;
    j["members"].push_back(std::move(m));
  }
  return j;
}

ordered_json selection_to_json(const Selection& sel, const std::vector<ObjectiveSpec>& specs, int divisions,
                               std::size_t top_k) {
  ordered_json j;
  j["divisions"] = divisions;
  j["top_k"] = top_k;
  j["preferences"] = ordered_json::array();
  for (const auto& c : sel.by_preference) {
    j["preferences"].push_back({{"preference", c.preference.w}, {"index", c.archive_index}, {"cosine", c.cosine}});
  }
  j["best_per_objective"] = ordered_json::array();
  for (std::size_t k = 0; k < sel.best_per_objective.size(); ++k) {
    const std::string name = k < specs.size() ? specs[k].name : "f" + std::to_string(k + 1);
    j["best_per_objective"].push_back({{"objective", name}, {"index", sel.best_per_objective[k]}});
  }
  return j;
}

namespace {

std::vector<ObjectiveSpec> effective_specs(const RunState& state) {
  if (!state.config.objectives.empty()) return state.config.objectives;
  if (state.config.evaluator.type == "synthetic") {
    return SyntheticConflictingEvaluator(state.config.evaluator.anchor_a, state.config.evaluator.anchor_b).default_specs();
  }
  return {};
}

void write_hv_trace(const RunState& state, const std::filesystem::path& dir) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "iteration,hypervolume,front_size,hypervolume_final_reference\n";
  for (std::size_t t = 0; t < state.iterations.size(); ++t) {
    const auto& r = state.iterations[t];
    os << r.iteration << ',' << r.hypervolume << ',' << r.pareto_indices.size() << ',';
    if (t < state.hv_fixed_reference.size()) os << state.hv_fixed_reference[t];
    os << '\n';
  }
  write_text_atomic(dir / "hv_trace.csv", os.str());
}

}  // namespace

void write_run_outputs(const RunState& state, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const ParetoFront front = final_front(state);
  write_text_atomic(dir / "front.json", front_to_json(state, front).dump(2) + "\n");
  if (!front.empty()) {
    const auto specs = effective_specs(state);
    const auto prefs = das_dennis(static_cast<int>(front.points.front().size()), state.config.das_dennis_divisions);
    const Selection sel = select_solutions(front, prefs, static_cast<std::size_t>(state.config.top_k));
    write_text_atomic(dir / "selection.json",
                      selection_to_json(sel, specs, state.config.das_dennis_divisions,
                                        static_cast<std::size_t>(state.config.top_k)).dump(2) + "\n");
  }
  write_hv_trace(state, dir);
  if (state.partition) write_text_atomic(dir / "partition.json", state.partition->dump(2) + "\n");
}

void write_report(const RunState& state, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_hv_trace(state, dir);

  if (state.partition) {
    const auto& p = *state.partition;
    const auto d = p.at("d").get<std::vector<double>>();
    std::vector<int> block_of(d.size(), -1);
    int b = 0;
    for (const auto& blk : p.at("blocks")) {
      for (int l = blk.at(0).get<int>(); l <= blk.at(1).get<int>(); ++l) block_of[static_cast<std::size_t>(l)] = b;
      ++b;
    }
    std::ostringstream os;
    os << std::setprecision(17) << "layer,diff,block,block_start\n";
    for (std::size_t l = 0; l < d.size(); ++l) {
      const bool start = l == 0 || block_of[l] != block_of[l - 1];
      os << l << ',' << d[l] << ',' << block_of[l] << ',' << (start ? 1 : 0) << '\n';
    }
    write_text_atomic(dir / "layer_diffs.csv", os.str());
  }

  const ParetoFront front = final_front(state);
  std::set<std::size_t> on_front(front.indices.begin(), front.indices.end());
  std::ostringstream os;
  os << std::setprecision(17) << "index,iteration,pareto";
  const std::size_t K = state.observations.empty() ? 0 : state.observations.front().objectives.size();
  for (std::size_t k = 0; k < K; ++k) os << ",f" << (k + 1);
  for (int d = 0; d < state.dimension; ++d) os << ",x" << d;
  os << '\n';
  for (std::size_t i = 0; i < state.observations.size(); ++i) {
    const auto& o = state.observations[i];
    os << i << ',' << o.iteration << ',' << (on_front.count(i) ? 1 : 0);
    for (double f : o.objectives) os << ',' << f;
    for (double x : o.x) os << ',' << x;
    os << '\n';
  }
  write_text_atomic(dir / "front_scatter.csv", os.str());
}

}  // namespace blockmerge
