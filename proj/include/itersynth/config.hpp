// Copyright 2026 The itersynth Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "itersynth/dataset.hpp"
#include "itersynth/detail/rng.hpp"
#include "itersynth/error.hpp"
#include "itersynth/modelio/endpoint.hpp"
#include "itersynth/modelio/finetune.hpp"
#include "itersynth/modelio/sim.hpp"
#include "itersynth/scoring.hpp"
#include "itersynth/selection.hpp"
#include "itersynth/synthgen.hpp"
#include "itersynth/toml.hpp"

namespace itersynth {

enum class VerifierKind { kBoxedMatch, kArithmetic24, kLlmJudge };

inline std::string_view to_string(VerifierKind v) {
  switch (v) {
    case VerifierKind::kBoxedMatch: return "boxed_match";
    case VerifierKind::kArithmetic24: return "arithmetic_24";
    case VerifierKind::kLlmJudge: return "llm_judge";
  }
  return "boxed_match";
}

inline VerifierKind verifier_kind_from_string(std::string_view s) {
  if (s == "boxed_match") return VerifierKind::kBoxedMatch;
  if (s == "arithmetic_24") return VerifierKind::kArithmetic24;
  if (s == "llm_judge") return VerifierKind::kLlmJudge;
  throw ValidationError("unknown verifier '" + std::string(s) + "'");
}

struct EndpointSpec {
  bool enabled = false;
  modelio::Transport transport = modelio::Transport::kSimulated;
  modelio::EndpointConfig config;
  std::set<modelio::Capability> capabilities;
  double timeout_seconds = 120.0;
};

struct DataConfig {
  DatasetKind kind = DatasetKind::kGsm8kStyle;
  std::string source = "files";  // "files" or "sim"
  std::filesystem::path seed_path;
  std::filesystem::path validation_path;
  std::filesystem::path test_path;
  std::size_t sim_seed_size = 400;
  std::size_t sim_validation_size = 100;
  std::size_t sim_test_size = 400;
  VerifierKind verifier = VerifierKind::kBoxedMatch;
};

struct BudgetConfig {
  std::optional<std::int64_t> teacher;
  std::optional<std::int64_t> student;
  std::optional<std::int64_t> reward;
  bool include_reward_tokens = false;
};

struct RunConfig {
  std::string name = "run";
  int iterations = 3;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::filesystem::path output_dir = "out";
  std::filesystem::path template_dir;
  std::size_t parallelism = 1;
  double dedup_threshold = synthgen::kDefaultDedupThreshold;
  int few_shot_k = 5;
  bool fidelity = true;

  DataConfig data;
  selection::SelectionConfig selection;
  scoring::ScorerKind scorer = scoring::ScorerKind::kLossSelf;
  std::size_t projection_dim = scoring::kDefaultProjectionDim;
  modelio::FinetuneHyperparams finetune;
  std::string finetune_preset;
  BudgetConfig budget;

  EndpointSpec teacher;
  EndpointSpec student;
  EndpointSpec reward;
  EndpointSpec judge;
  modelio::sim::SimConfig sim;
};

namespace detail_cfg {

inline std::set<modelio::Capability> default_caps(modelio::ModelRole role) {
  using modelio::Capability;
  switch (role) {
    case modelio::ModelRole::kTeacher: return {Capability::kGenerate};
    case modelio::ModelRole::kStudent:
      return {Capability::kGenerate, Capability::kLogprobs, Capability::kGradEmbedding,
              Capability::kFinetune};
    case modelio::ModelRole::kReward: return {Capability::kReward};
  }
  return {};
}

// Consumes keys from a table and reports leftovers so typos fail loudly.
class Table {
 public:
  Table(const nlohmann::ordered_json& root, std::string name) : name_(std::move(name)) {
    if (root.contains(name_)) {
      node_ = root.at(name_);
      if (!node_.is_object()) throw ValidationError("[" + name_ + "] must be a table");
    } else {
      node_ = nlohmann::ordered_json::object();
    }
  }

  bool present() const { return !node_.empty(); }

  template <typename T>
  void get(const char* key, T& out) {
    if (!node_.contains(key)) return;
    used_.insert(key);
    if constexpr (std::is_unsigned_v<T>) {
      if (node_.at(key).is_number_integer() && node_.at(key).get<std::int64_t>() < 0) {
        throw ValidationError(name_ + "." + key + " must not be negative");
      }
    }
    try {
      out = node_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(name_ + "." + key + " has the wrong type");
    }
  }

  void get_path(const char* key, std::filesystem::path& out) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = s;
  }

  template <typename T>
  void get_optional(const char* key, std::optional<T>& out) {
    if (!node_.contains(key)) return;
    T v{};
    get(key, v);
    out = v;
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!used_.count(it.key())) {
        throw ValidationError("unknown config key " + name_ + "." + it.key());
      }
    }
  }

 private:
  std::string name_;
  nlohmann::ordered_json node_;
  std::set<std::string> used_;
};

inline EndpointSpec endpoint_from(const nlohmann::ordered_json& root, const char* section,
                                  modelio::ModelRole role, bool enabled_by_default) {
  Table t(root, section);
  EndpointSpec spec;
  spec.enabled = enabled_by_default || t.present();
  t.get("enabled", spec.enabled);
  std::string transport = "simulated";
  t.get("transport", transport);
  if (transport == "simulated" || transport == "sim") {
    spec.transport = modelio::Transport::kSimulated;
  } else if (transport == "remote") {
    spec.transport = modelio::Transport::kRemote;
  } else {
    throw ValidationError(std::string(section) + ".transport must be 'simulated' or 'remote'");
  }
  spec.config.name = section;
  t.get("base_url", spec.config.base_url);
  t.get("model", spec.config.model);
  t.get("api_key_env", spec.config.api_key_env);
  t.get("temperature", spec.config.temperature);
  t.get("max_output_tokens", spec.config.max_output_tokens);
  t.get("timeout_seconds", spec.timeout_seconds);
  std::vector<std::string> caps;
  t.get("capabilities", caps);
  if (caps.empty()) {
    spec.capabilities = default_caps(role);
  } else {
    for (const auto& c : caps) spec.capabilities.insert(modelio::capability_from_string(c));
  }
  t.finish();
  if (spec.transport == modelio::Transport::kRemote && spec.enabled) {
    if (spec.config.base_url.empty()) {
      throw ValidationError(std::string(section) + ".base_url is required for remote endpoints");
    }
  }
  if (!(spec.config.temperature >= 0.0)) {
    throw ValidationError(std::string(section) + ".temperature must be >= 0");
  }
  return spec;
}

inline nlohmann::ordered_json endpoint_json(const EndpointSpec& s) {
  nlohmann::ordered_json j;
  j["enabled"] = s.enabled;
  j["transport"] = s.transport == modelio::Transport::kRemote ? "remote" : "simulated";
  j["base_url"] = s.config.base_url;
  j["model"] = s.config.model;
  j["api_key_env"] = s.config.api_key_env;
  j["temperature"] = s.config.temperature;
  j["max_output_tokens"] = s.config.max_output_tokens;
  j["timeout_seconds"] = s.timeout_seconds;
  auto caps = nlohmann::ordered_json::array();
  for (auto c : s.capabilities) caps.push_back(std::string(modelio::to_string(c)));
  j["capabilities"] = caps;
  return j;
}

}  // namespace detail_cfg

inline void validate(const RunConfig& c) {
  if (c.iterations < 1) throw ValidationError("run.iterations must be >= 1");
  if (c.seeds.empty()) throw ValidationError("run.seeds must be non-empty");
  std::set<std::uint64_t> distinct(c.seeds.begin(), c.seeds.end());
  if (distinct.size() != c.seeds.size()) throw ValidationError("run.seeds must be distinct");
  if (c.parallelism < 1) throw ValidationError("run.parallelism must be >= 1");
  if (!(c.dedup_threshold > 0.0 && c.dedup_threshold <= 1.0)) {
    throw ValidationError("run.dedup_threshold must lie in (0, 1]");
  }
  if (c.few_shot_k < 0) throw ValidationError("run.few_shot_k must be >= 0");
  if (c.projection_dim < 1) throw ValidationError("selection.projection_dim must be >= 1");
  selection::validate(c.selection);
  modelio::validate(c.finetune);
  if (c.data.source != "files" && c.data.source != "sim") {
    throw ValidationError("data.source must be 'files' or 'sim'");
  }
  if (c.data.source == "files" && c.data.seed_path.empty()) {
    throw ValidationError("data.seed_path is required when data.source = 'files'");
  }
  if (c.data.source == "files" && c.data.test_path.empty()) {
    throw ValidationError("data.test_path is required when data.source = 'files'");
  }
  using scoring::ScorerKind;
  const bool needs_reward = c.scorer == ScorerKind::kRewardSelf || c.scorer == ScorerKind::kRewardGt;
  if (needs_reward && !c.reward.enabled) {
    throw ValidationError("scorer " + std::string(scoring::to_string(c.scorer)) +
                          " needs a [reward] endpoint");
  }
  if (c.data.verifier == VerifierKind::kLlmJudge && !c.judge.enabled) {
    throw ValidationError("verifier llm_judge needs a [judge] endpoint");
  }
  if (c.selection.strategy == selection::Strategy::kPooled) {
    if (c.selection.pool_rule == selection::PoolRule::kLionEasyHard &&
        c.scorer != ScorerKind::kJudgePair) {
      throw ValidationError("pool rule lion_easy_hard needs scorer judge_pair");
    }
    if (c.selection.pool_rule == selection::PoolRule::kEvokdCorrectIncorrect &&
        c.scorer != ScorerKind::kCorrectness) {
      throw ValidationError("pool rule evokd_correct_incorrect needs scorer correctness");
    }
  }
  if (c.selection.rank_by_judge_gap && c.scorer != ScorerKind::kJudgePair) {
    throw ValidationError("selection.key = judge_gap needs scorer judge_pair");
  }
  if (c.selection.strategy == selection::Strategy::kBadge &&
      !c.student.capabilities.count(modelio::Capability::kGradEmbedding)) {
    throw ValidationError("badge selection needs a student with grad_embedding");
  }
  if (!c.student.capabilities.count(modelio::Capability::kFinetune)) {
    throw ValidationError("the student endpoint must expose finetune");
  }
  const bool any_sim = c.data.source == "sim" ||
                       c.teacher.transport == modelio::Transport::kSimulated ||
                       c.student.transport == modelio::Transport::kSimulated;
  if (any_sim) modelio::sim::validate(c.sim);
}

/// Builds a RunConfig from a parsed TOML tree. Unknown keys are errors.
inline RunConfig run_config_from_json(const nlohmann::ordered_json& root) {
  static const std::set<std::string> kSections{"run",     "data",    "selection", "finetune",
                                               "budget",  "teacher", "student",   "reward",
                                               "judge",   "sim"};
  for (auto it = root.begin(); it != root.end(); ++it) {
    if (!kSections.count(it.key())) throw ValidationError("unknown config section [" + it.key() + "]");
  }
  RunConfig c;
  {
    detail_cfg::Table t(root, "run");
    t.get("name", c.name);
    t.get("iterations", c.iterations);
    t.get("seeds", c.seeds);
    t.get_path("output_dir", c.output_dir);
    t.get_path("template_dir", c.template_dir);
    t.get("parallelism", c.parallelism);
    t.get("dedup_threshold", c.dedup_threshold);
    t.get("few_shot_k", c.few_shot_k);
    t.get("fidelity", c.fidelity);
    t.finish();
  }
  {
    detail_cfg::Table t(root, "data");
    std::string kind(to_string(c.data.kind));
    t.get("kind", kind);
    c.data.kind = dataset_kind_from_string(kind);
    t.get("source", c.data.source);
    t.get_path("seed_path", c.data.seed_path);
    t.get_path("validation_path", c.data.validation_path);
    t.get_path("test_path", c.data.test_path);
    t.get("sim_seed_size", c.data.sim_seed_size);
    t.get("sim_validation_size", c.data.sim_validation_size);
    t.get("sim_test_size", c.data.sim_test_size);
    std::string verifier = c.data.kind == DatasetKind::kGame24Backward ? "arithmetic_24" : "boxed_match";
    t.get("verifier", verifier);
    c.data.verifier = verifier_kind_from_string(verifier);
    t.finish();
  }
  {
    detail_cfg::Table t(root, "selection");
    std::string v;
    v = std::string(selection::to_string(c.selection.strategy));
    t.get("strategy", v);
    c.selection.strategy = selection::strategy_from_string(v);
    t.get("m", c.selection.m);
    v = std::string(selection::to_string(c.selection.direction));
    t.get("direction", v);
    c.selection.direction = selection::direction_from_string(v);
    t.get("temperature", c.selection.temperature);
    v = std::string(selection::to_string(c.selection.pool_rule));
    t.get("pool_rule", v);
    c.selection.pool_rule = selection::pool_rule_from_string(v);
    v = std::string(selection::to_string(c.selection.badge_anchor));
    t.get("badge_anchor", v);
    c.selection.badge_anchor = selection::badge_anchor_from_string(v);
    t.get("lion_hard_gap", c.selection.lion_hard_gap);
    std::string key = "value";
    t.get("key", key);
    if (key != "value" && key != "judge_gap") {
      throw ValidationError("selection.key must be 'value' or 'judge_gap'");
    }
    c.selection.rank_by_judge_gap = key == "judge_gap";
    t.get("exclude_previously_selected", c.selection.exclude_previously_selected);
    v = std::string(scoring::to_string(c.scorer));
    t.get("scorer", v);
    c.scorer = scoring::scorer_kind_from_string(v);
    t.get("projection_dim", c.projection_dim);
    t.finish();
  }
  {
    detail_cfg::Table t(root, "finetune");
    t.get("preset", c.finetune_preset);
    if (!c.finetune_preset.empty()) c.finetune = modelio::finetune_preset(c.finetune_preset);
    t.get("adapter_rank", c.finetune.adapter_rank);
    t.get("learning_rate", c.finetune.learning_rate);
    t.get("epochs", c.finetune.epochs);
    t.get("batch_size", c.finetune.batch_size);
    t.get("grad_accum_steps", c.finetune.grad_accum_steps);
    t.get("grad_norm_clip", c.finetune.grad_norm_clip);
    t.get("warmup_fraction", c.finetune.warmup_fraction);
    std::string schedule(modelio::to_string(c.finetune.schedule));
    t.get("schedule", schedule);
    c.finetune.schedule = modelio::lr_schedule_from_string(schedule);
    t.get("min_lr", c.finetune.min_lr);
    t.finish();
  }
  {
    detail_cfg::Table t(root, "budget");
    t.get_optional("teacher_tokens", c.budget.teacher);
    t.get_optional("student_tokens", c.budget.student);
    t.get_optional("reward_tokens", c.budget.reward);
    t.get("include_reward_tokens", c.budget.include_reward_tokens);
    t.finish();
  }
  c.teacher = detail_cfg::endpoint_from(root, "teacher", modelio::ModelRole::kTeacher, true);
  c.student = detail_cfg::endpoint_from(root, "student", modelio::ModelRole::kStudent, true);
  c.reward = detail_cfg::endpoint_from(root, "reward", modelio::ModelRole::kReward, false);
  c.judge = detail_cfg::endpoint_from(root, "judge", modelio::ModelRole::kTeacher, false);
  {
    detail_cfg::Table t(root, "sim");
    t.get("topics", c.sim.topics);
    t.get("slope", c.sim.slope);
    t.get("base_mastery", c.sim.base_mastery);
    t.get("eta", c.sim.eta);
    t.get("bump_center", c.sim.bump_center);
    t.get("bump_width", c.sim.bump_width);
    t.get("teacher_noise", c.sim.teacher_noise);
    t.get("reward_noise", c.sim.reward_noise);
    t.get("filler_conf_lo", c.sim.filler_conf_lo);
    t.get("filler_conf_hi", c.sim.filler_conf_hi);
    t.get("filler_vocab", c.sim.filler_vocab);
    t.get("question_words", c.sim.question_words);
    t.get("vocab_per_topic", c.sim.vocab_per_topic);
    t.get("seed", c.sim.seed);
    t.finish();
  }
  validate(c);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path,
                                 const std::vector<std::string>& overrides = {}) {
  auto root = toml_io::parse_file(path);
  for (const auto& o : overrides) toml_io::apply_override(root, o);
  auto c = run_config_from_json(root);
  // Relative input paths are taken relative to the config file.
  const auto base = path.parent_path();
  for (auto* p : {&c.data.seed_path, &c.data.validation_path, &c.data.test_path, &c.template_dir}) {
    if (!p->empty() && p->is_relative()) *p = (base / *p).lexically_normal();
  }
  return c;
}

/// Fully resolved configuration, every field explicit, in fixed order.
inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  auto& run = j["run"];
  run["name"] = c.name;
  run["iterations"] = c.iterations;
  run["seeds"] = c.seeds;
  // Omitted when cleared: stored run copies are location independent.
  if (!c.output_dir.empty()) run["output_dir"] = c.output_dir.generic_string();
  run["template_dir"] = c.template_dir.generic_string();
  run["parallelism"] = c.parallelism;
  run["dedup_threshold"] = c.dedup_threshold;
  run["few_shot_k"] = c.few_shot_k;
  run["fidelity"] = c.fidelity;
  auto& data = j["data"];
  data["kind"] = std::string(to_string(c.data.kind));
  data["source"] = c.data.source;
  data["seed_path"] = c.data.seed_path.generic_string();
  data["validation_path"] = c.data.validation_path.generic_string();
  data["test_path"] = c.data.test_path.generic_string();
  data["sim_seed_size"] = c.data.sim_seed_size;
  data["sim_validation_size"] = c.data.sim_validation_size;
  data["sim_test_size"] = c.data.sim_test_size;
  data["verifier"] = std::string(to_string(c.data.verifier));
  auto& sel = j["selection"];
  sel["strategy"] = std::string(selection::to_string(c.selection.strategy));
  sel["m"] = c.selection.m;
  sel["direction"] = std::string(selection::to_string(c.selection.direction));
  sel["temperature"] = c.selection.temperature;
  sel["pool_rule"] = std::string(selection::to_string(c.selection.pool_rule));
  sel["badge_anchor"] = std::string(selection::to_string(c.selection.badge_anchor));
  sel["lion_hard_gap"] = c.selection.lion_hard_gap;
  sel["key"] = c.selection.rank_by_judge_gap ? "judge_gap" : "value";
  sel["exclude_previously_selected"] = c.selection.exclude_previously_selected;
  sel["scorer"] = std::string(scoring::to_string(c.scorer));
  sel["projection_dim"] = c.projection_dim;
  auto ft = modelio::to_json(c.finetune);
  ft["preset"] = c.finetune_preset;
  j["finetune"] = ft;
  auto& budget = j["budget"];
  budget["teacher_tokens"] = c.budget.teacher ? nlohmann::ordered_json(*c.budget.teacher) : nullptr;
  budget["student_tokens"] = c.budget.student ? nlohmann::ordered_json(*c.budget.student) : nullptr;
  budget["reward_tokens"] = c.budget.reward ? nlohmann::ordered_json(*c.budget.reward) : nullptr;
  budget["include_reward_tokens"] = c.budget.include_reward_tokens;
  j["teacher"] = detail_cfg::endpoint_json(c.teacher);
  j["student"] = detail_cfg::endpoint_json(c.student);
  j["reward"] = detail_cfg::endpoint_json(c.reward);
  j["judge"] = detail_cfg::endpoint_json(c.judge);
  j["sim"] = modelio::sim::to_json(c.sim);
  return j;
}

/// Hash of everything that determines results. Budget caps, parallelism and
/// the output location are operational and excluded, so a stopped run can be
/// resumed with a larger cap.
inline std::string config_hash(const RunConfig& c) {
  auto j = to_json(c);
  j.erase("budget");
  j["run"].erase("parallelism");
  if (j["run"].contains("output_dir")) j["run"].erase("output_dir");
  return detail::hex64(detail::fnv1a64(j.dump()));
}

/// Renders the resolved config back to TOML (the copy kept with each run).
inline std::string to_toml(const RunConfig& c) {
  const auto j = to_json(c);
  std::string out;
  for (auto sec = j.begin(); sec != j.end(); ++sec) {
    if (!out.empty()) out += '\n';
    out += "[" + sec.key() + "]\n";
    for (auto kv = sec.value().begin(); kv != sec.value().end(); ++kv) {
      if (kv.value().is_null()) continue;
      out += kv.key() + " = " + kv.value().dump() + "\n";
    }
  }
  return out;
}

}  // namespace itersynth
