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

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "itersynth/backends.hpp"
#include "itersynth/config.hpp"
#include "itersynth/corpus.hpp"
#include "itersynth/detail/fs.hpp"
#include "itersynth/detail/parallel.hpp"
#include "itersynth/detail/rng.hpp"
#include "itersynth/error.hpp"
#include "itersynth/modelio/endpoint.hpp"
#include "itersynth/modelio/sim.hpp"
#include "itersynth/scoring.hpp"
#include "itersynth/selection.hpp"
#include "itersynth/synthgen.hpp"
#include "itersynth/verify.hpp"

#ifndef ITERSYNTH_VERSION
#define ITERSYNTH_VERSION "0.0.0"
#endif

namespace itersynth::engine {

inline constexpr std::string_view kManifestFormat = "itersynth.manifest/1";


struct Datasets {
  Corpus seed;
  Corpus validation{CorpusRole::kValidation, {}};
  Corpus test;
};

/// Seed, validation and test corpora: read from disk, or generated from the
/// simulated world (fixed by sim.seed, so every replicate sees the same data).
inline Datasets load_datasets(const RunConfig& c) {
  Datasets d;
  if (c.data.source == "sim") {
    const modelio::sim::SimWorld world(c.sim);
    d.seed = modelio::sim::make_sim_corpus(world, CorpusRole::kSeed, c.data.sim_seed_size, "seed",
                                           c.sim.seed);
    d.validation = modelio::sim::make_sim_corpus(world, CorpusRole::kValidation,
                                                 c.data.sim_validation_size, "val", c.sim.seed);
    d.test = modelio::sim::make_sim_corpus(world, CorpusRole::kTest, c.data.sim_test_size, "test",
                                           c.sim.seed);
    return d;
  }
  d.seed = load_corpus(c.data.seed_path, CorpusRole::kSeed);
  if (!c.data.validation_path.empty()) {
    d.validation = load_corpus(c.data.validation_path, CorpusRole::kValidation);
  }
  d.test = load_corpus(c.data.test_path, CorpusRole::kTest);
  if (d.test.empty()) throw ValidationError("test corpus is empty");
  return d;
}

struct IterationState {
  int t = 0;
  std::size_t selected = 0;
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  std::size_t train_size = 0;
  double accuracy = 0.0;
  double standard_error = 0.0;
  std::string student_state;
  nlohmann::ordered_json ledger;
  std::int64_t teacher_tokens = 0;
  nlohmann::ordered_json artifacts = nlohmann::ordered_json::object();
};

inline nlohmann::ordered_json to_json(const IterationState& s) {
  nlohmann::ordered_json j;
  j["t"] = s.t;
  j["selected"] = s.selected;
  j["attempts"] = s.attempts;
  j["accepted"] = s.accepted;
  j["train_size"] = s.train_size;
  j["accuracy"] = s.accuracy;
  j["standard_error"] = s.standard_error;
  j["student_state"] = s.student_state;
  j["teacher_tokens"] = s.teacher_tokens;
  j["ledger"] = s.ledger;
  j["artifacts"] = s.artifacts;
  return j;
}

inline IterationState iteration_state_from_json(const nlohmann::ordered_json& j) {
  IterationState s;
  s.t = j.at("t").get<int>();
  s.selected = j.at("selected").get<std::size_t>();
  s.attempts = j.at("attempts").get<std::size_t>();
  s.accepted = j.at("accepted").get<std::size_t>();
  s.train_size = j.at("train_size").get<std::size_t>();
  s.accuracy = j.at("accuracy").get<double>();
  s.standard_error = j.at("standard_error").get<double>();
  s.student_state = j.at("student_state").get<std::string>();
  s.teacher_tokens = j.at("teacher_tokens").get<std::int64_t>();
  s.ledger = j.at("ledger");
  s.artifacts = j.at("artifacts");
  return s;
}

enum class RunStatus { kIncomplete, kComplete, kStoppedBudget, kFailed };

inline std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::kIncomplete: return "incomplete";
    case RunStatus::kComplete: return "complete";
    case RunStatus::kStoppedBudget: return "stopped_budget";
    case RunStatus::kFailed: return "failed";
  }
  return "incomplete";
}

inline RunStatus run_status_from_string(std::string_view s) {
  for (auto v : {RunStatus::kIncomplete, RunStatus::kComplete, RunStatus::kStoppedBudget,
                 RunStatus::kFailed}) {
    if (to_string(v) == s) return v;
  }
  throw IntegrityError("unknown run status '" + std::string(s) + "'");
}

struct ReplicateRecord {
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::kIncomplete;
  double base_accuracy = 0.0;
  std::vector<IterationState> iterations;
  std::optional<std::string> error;
};

struct RunManifest {
  std::string config_hash;
  nlohmann::ordered_json config;
  RunStatus status = RunStatus::kIncomplete;
  int iterations = 0;
  nlohmann::ordered_json data = nlohmann::ordered_json::object();
  std::vector<ReplicateRecord> replicates;
  std::filesystem::path directory;

  bool stopped_on_budget() const { return status == RunStatus::kStoppedBudget; }
};

inline nlohmann::ordered_json to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = std::string(kManifestFormat);
  j["software"] = {{"name", "itersynth"}, {"version", ITERSYNTH_VERSION}};
  j["config_hash"] = m.config_hash;
  j["status"] = std::string(to_string(m.status));
  j["iterations"] = m.iterations;
  j["teacher_decoding"] = {{"temperature", m.config["teacher"]["temperature"]},
                           {"max_output_tokens", m.config["teacher"]["max_output_tokens"]}};
  j["data"] = m.data;
  auto reps = nlohmann::ordered_json::array();
  for (const auto& r : m.replicates) {
    nlohmann::ordered_json rj;
    rj["seed"] = r.seed;
    rj["status"] = std::string(to_string(r.status));
    rj["base_accuracy"] = r.base_accuracy;
    auto its = nlohmann::ordered_json::array();
    for (const auto& s : r.iterations) its.push_back(to_json(s));
    rj["iterations"] = its;
    if (r.error) rj["error"] = *r.error;
    reps.push_back(rj);
  }
  j["replicates"] = reps;
  j["config"] = m.config;
  return j;
}

inline RunManifest manifest_from_json(const nlohmann::ordered_json& j) {
  try {
    if (j.at("format").get<std::string>() != kManifestFormat) {
      throw IntegrityError("unsupported manifest format");
    }
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.status = run_status_from_string(j.at("status").get<std::string>());
    m.iterations = j.at("iterations").get<int>();
    m.data = j.at("data");
    m.config = j.at("config");
    for (const auto& rj : j.at("replicates")) {
      ReplicateRecord r;
      r.seed = rj.at("seed").get<std::uint64_t>();
      r.status = run_status_from_string(rj.at("status").get<std::string>());
      r.base_accuracy = rj.at("base_accuracy").get<double>();
      for (const auto& sj : rj.at("iterations")) r.iterations.push_back(iteration_state_from_json(sj));
      if (rj.contains("error")) r.error = rj.at("error").get<std::string>();
      m.replicates.push_back(std::move(r));
    }
    return m;
  } catch (const IntegrityError&) {
    throw;
  } catch (const std::exception& e) {
    throw IntegrityError(std::string("corrupted manifest: ") + e.what());
  }
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / "manifest.json" : path;
  if (!std::filesystem::exists(file)) throw IoError("manifest not found: " + file.string());
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(detail::read_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("corrupted manifest " + file.string() + ": " + e.what());
  }
  auto m = manifest_from_json(j);
  m.directory = file.parent_path();
  return m;
}

inline std::filesystem::path replicate_dir(const std::filesystem::path& out, std::uint64_t seed) {
  return out / ("seed-" + std::to_string(seed));
}

inline std::filesystem::path iteration_dir(const std::filesystem::path& out, std::uint64_t seed,
                                           int t) {
  return replicate_dir(out, seed) / ("iter-" + std::to_string(t));
}

/// Progress hook: (seed, t, message).
using ProgressFn = std::function<void(std::uint64_t, int, const std::string&)>;

struct RunOptions {
  EndpointFactory factory;
  ProgressFn progress;
  // Stop after this many committed iterations per replicate (testing hook
  // that simulates an interruption).
  std::optional<int> stop_after_iterations;
};

namespace detail_engine {

inline std::string jsonl(const std::vector<nlohmann::ordered_json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

inline std::string corpus_text(const Corpus& c) {
  std::ostringstream ss;
  write_corpus(ss, c);
  return ss.str();
}

inline nlohmann::ordered_json record_json(const GenerationRecord& r) {
  nlohmann::ordered_json j;
  j["parent_id"] = r.parent_id;
  j["child_id"] = r.child_id;
  j["iteration"] = r.iteration;
  j["selection_score"] = r.selection_score ? nlohmann::ordered_json(*r.selection_score) : nullptr;
  j["scorer_kind"] = r.scorer_kind;
  j["child_score"] = r.child_score ? nlohmann::ordered_json(*r.child_score) : nullptr;
  j["child_correct"] = r.child_correct ? nlohmann::ordered_json(*r.child_correct) : nullptr;
  return j;
}

// Greedy predictions keyed by (student state, prompt); the student only
// changes at fine-tune time, so everything else is a cache hit.
class PredictionCache {
 public:
  std::optional<std::string> get(const std::string& state, const std::string& prompt) const {
    std::lock_guard lock(mu_);
    auto it = map_.find(key(state, prompt));
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }
  void put(const std::string& state, const std::string& prompt, std::string text) {
    std::lock_guard lock(mu_);
    map_.emplace(key(state, prompt), std::move(text));
  }

 private:
  static std::string key(const std::string& state, const std::string& prompt) {
    return state + '\x1f' + prompt;
  }
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> map_;
};

inline double selection_key(const RunConfig& c, const scoring::Score& s) {
  return c.selection.rank_by_judge_gap ? scoring::judge_gap(s) : s.value;
}

/// Ranks scored candidates with the configured score-based strategy.
inline std::vector<std::string> rank_scores(const RunConfig& c,
                                            const std::vector<scoring::Score>& scores,
                                            std::size_t k, std::uint64_t seed) {
  std::vector<scoring::Score> keyed = scores;
  for (auto& s : keyed) s.value = selection_key(c, s);
  switch (c.selection.strategy) {
    case selection::Strategy::kArgmax:
      return c.scorer == scoring::ScorerKind::kCorrectness
                 ? selection::select_argmax_shuffled_ties(keyed, k, c.selection.direction, seed)
                 : selection::select_argmax(keyed, k, c.selection.direction);
    case selection::Strategy::kSoftmaxSample:
      // Direction low samples from softmax(−s / T).
      if (c.selection.direction == selection::Direction::kLow) {
        for (auto& s : keyed) s.value = -s.value;
      }
      return selection::select_softmax_sample(keyed, k, c.selection.temperature, seed);
    case selection::Strategy::kPooled: {
      auto pools = c.selection.pool_rule == selection::PoolRule::kLionEasyHard
                       ? selection::lion_pools(scores, c.selection.lion_hard_gap)
                       : selection::evokd_pools(scores);
      return selection::select_pooled(pools.first, pools.second, k, seed);
    }
    default:
      throw ValidationError("strategy " + std::string(selection::to_string(c.selection.strategy)) +
                            " does not rank scores");
  }
}

class Pipeline {
 public:
  Pipeline(const RunConfig& config, const Datasets& data, Endpoints endpoints,
           std::uint64_t seed, std::filesystem::path out, PredictionCache& cache,
           const ProgressFn& progress)
      : config_(config),
        data_(data),
        ep_(std::move(endpoints)),
        seed_(seed),
        out_(std::move(out)),
        cache_(cache),
        progress_(progress),
        template_(synthgen::PromptTemplate::builtin(config.data.kind, config.template_dir,
                                                    config.few_shot_k)),
        history_(config.dedup_threshold) {
    if (config_.data.kind == DatasetKind::kGame24Backward) template_.few_shot_k = 0;
    switch (config_.data.verifier) {
      case VerifierKind::kBoxedMatch: verifier_ = verify::boxed_match_verifier(); break;
      case VerifierKind::kArithmetic24: verifier_ = verify::arithmetic_24_verifier(); break;
      case VerifierKind::kLlmJudge:
        if (!ep_.judge) throw ValidationError("llm_judge verifier needs a judge endpoint");
        verifier_ = verify::llm_judge_verifier(*ep_.judge, config_.data.kind, config_.template_dir);
        break;
    }
    state_ = ep_.student->backend().base_state();
    accumulated_ = Corpus(CorpusRole::kSynthetic, {}, 0);
  }

  double evaluate_base() { return evaluate(state_, nullptr).mean; }

  /// Rebuilds in-memory state from committed iterations on disk.
  void restore(const std::vector<IterationState>& done) {
    for (const auto& s : done) {
      const auto dir = iteration_dir(out_, seed_, s.t);
      verify_artifacts(dir, s);
      const auto synth = load_corpus(dir / "synthetic.jsonl", CorpusRole::kSynthetic);
      accumulated_ = merge_accumulate(synth, accumulated_);
      for (const auto& sample : synth) {
        if (config_.data.kind != DatasetKind::kGame24Backward) history_.add(sample.question);
      }
      const auto sel = nlohmann::json::parse(detail::read_file(dir / "selected.json"));
      for (const auto& id : sel.at("selected")) previously_selected_.insert(id.get<std::string>());
      const auto st = nlohmann::json::parse(detail::read_file(dir / "student.json"));
      state_.id = st.at("id").get<std::string>();
      state_.payload = st.at("payload");
      ep_.ledger->restore(s.ledger.at("generation"));
      ep_.judge_ledger->restore(s.ledger.at("judge"));
    }
  }

  /// Runs iteration t and commits its artifacts. Budget exhaustion throws
  /// BudgetError before anything is written.
  IterationState run_iteration(int t) {
    const auto prev_state = state_;
    const std::uint64_t iter_seed = detail::derive_seed(seed_, "iteration", {std::uint64_t(t)});

    // (1)+(2) predictions, scores and the ranked candidate list.
    std::vector<const Sample*> candidates;
    for (const auto& s : data_.seed) {
      if (config_.selection.exclude_previously_selected && previously_selected_.count(s.id)) continue;
      candidates.push_back(&s);
    }
    const std::size_t m = config_.selection.m;
    selection::check_batch(m, candidates.size());
    const std::size_t ranked_len = std::min(candidates.size(), 3 * m);
    note(t, "scoring " + std::to_string(candidates.size()) + " candidates");

    std::vector<scoring::Score> scores;
    std::vector<scoring::GradEmbedding> embeddings;
    std::map<std::string, double> key_of;
    std::vector<std::string> ranked;
    const auto strategy = config_.selection.strategy;
    const std::uint64_t select_seed = detail::derive_seed(iter_seed, "select");
    if (strategy == selection::Strategy::kRandom) {
      std::vector<std::string> ids;
      for (auto* s : candidates) ids.push_back(s->id);
      ranked = selection::select_random(ids, ranked_len, select_seed);
    } else if (strategy == selection::Strategy::kBadge) {
      embeddings = embed(prev_state, candidates);
      ranked = selection::select_badge(embeddings, ranked_len, select_seed,
                                       config_.selection.badge_anchor);
      for (const auto& e : embeddings) {
        double sq = 0.0;
        for (double x : e.vector) sq += x * x;
        key_of[e.sample_id] = std::sqrt(sq);
      }
    } else {
      scores = score(prev_state, candidates, iter_seed);
      for (const auto& sc : scores) key_of[sc.sample_id] = selection_key(config_, sc);
      ranked = rank_scores(config_, scores, ranked_len, select_seed);
    }
    std::vector<std::string> selected(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(m));

    // (3) synthesis from the ranked list; rejects fall through to the next rank.
    note(t, "synthesizing from " + std::to_string(ranked.size()) + " ranked exemplars");
    std::vector<std::optional<double>> exemplar_scores;
    for (const auto& id : ranked) {
      auto it = key_of.find(id);
      exemplar_scores.push_back(it == key_of.end() ? std::nullopt : std::optional<double>(it->second));
    }
    synthgen::DedupHistory history = history_;
    synthgen::BatchRequest req;
    req.iteration = t;
    req.m = m;
    req.seed = iter_seed;
    req.parallelism = config_.parallelism;
    req.scorer_kind = strategy == selection::Strategy::kRandom
                          ? "random"
                          : strategy == selection::Strategy::kBadge
                                ? "badge"
                                : std::string(scoring::to_string(config_.scorer));
    auto batch = synthgen::synthesize_batch(*ep_.teacher, template_, data_.seed, ranked,
                                            exemplar_scores, history, req);
    if (batch.budget_exhausted) {
      throw BudgetError("teacher budget exhausted during synthesis at iteration " +
                        std::to_string(t) + " (" + std::to_string(batch.accepted.size()) + " of " +
                        std::to_string(m) + " accepted)");
    }
    if (batch.accepted.empty()) {
      throw ValidationError("iteration " + std::to_string(t) + " produced no accepted samples after " +
                            std::to_string(batch.attempts) + " attempts");
    }
    Corpus synthetic(CorpusRole::kSynthetic, batch.accepted, t);

    // Fidelity: score the children against the student that scored parents.
    if (config_.fidelity && strategy != selection::Strategy::kRandom &&
        strategy != selection::Strategy::kBadge) {
      std::vector<const Sample*> children;
      for (const auto& s : synthetic) children.push_back(&s);
      const auto child_scores = score(prev_state, children, detail::derive_seed(iter_seed, "fidelity"));
      const auto child_preds = predict(prev_state, children);
      for (std::size_t i = 0; i < children.size(); ++i) {
        batch.records[i].child_score = selection_key(config_, child_scores[i]);
        batch.records[i].child_correct = verifier_(*children[i], child_preds[i]).correct;
      }
    }

    // (4) accumulate, previous first, and fine-tune from base weights.
    Corpus train = merge_accumulate(synthetic, accumulated_);
    note(t, "fine-tuning on " + std::to_string(train.size()) + " samples");
    const auto new_state = modelio::student_finetune(
        *ep_.student, train, data_.validation, config_.finetune,
        template_.answer_template, detail::derive_seed(iter_seed, "finetune"));

    // (5) evaluate on the test set.
    std::vector<verify::Verdict> verdicts;
    const auto acc = evaluate(new_state, &verdicts);
    note(t, "accuracy " + detail::format_fixed(acc.mean, 4));

    // Commit.
    IterationState st;
    st.t = t;
    st.selected = selected.size();
    st.attempts = batch.attempts;
    st.accepted = synthetic.size();
    st.train_size = train.size();
    st.accuracy = acc.mean;
    st.standard_error = acc.standard_error;
    st.student_state = new_state.id;
    st.teacher_tokens = ep_.ledger->teacher_budget_tokens(config_.budget.include_reward_tokens);
    st.ledger["generation"] = ep_.ledger->snapshot();
    st.ledger["judge"] = ep_.judge_ledger->snapshot();

    const auto dir = iteration_dir(out_, seed_, t);
    std::vector<std::pair<std::string, std::string>> files;
    {
      std::vector<nlohmann::ordered_json> rows;
      for (const auto& s : scores) rows.push_back(scoring::to_json(s));
      files.emplace_back("scores.jsonl", jsonl(rows));
    }
    if (!embeddings.empty()) {
      std::vector<nlohmann::ordered_json> rows;
      for (const auto& e : embeddings) rows.push_back(scoring::to_json(e));
      files.emplace_back("embeddings.jsonl", jsonl(rows));
    }
    {
      nlohmann::ordered_json sel;
      sel["selected"] = selected;
      sel["ranked"] = ranked;
      files.emplace_back("selected.json", sel.dump(2) + "\n");
    }
    files.emplace_back("synthetic.jsonl", corpus_text(synthetic));
    {
      std::vector<nlohmann::ordered_json> rows;
      for (const auto& o : batch.outcomes) rows.push_back(synthgen::to_json(o));
      files.emplace_back("outcomes.jsonl", jsonl(rows));
    }
    {
      std::vector<nlohmann::ordered_json> rows;
      for (const auto& r : batch.records) rows.push_back(record_json(r));
      files.emplace_back("records.jsonl", jsonl(rows));
    }
    {
      std::vector<nlohmann::ordered_json> rows;
      for (const auto& v : verdicts) rows.push_back(verify::to_json(v));
      files.emplace_back("verdicts.jsonl", jsonl(rows));
    }
    {
      std::vector<nlohmann::ordered_json> rows;
      const auto calls = ep_.ledger->calls();
      // Calls made before iteration 0 (base evaluation) land in its log.
      for (std::size_t i = logged_calls_; i < calls.size(); ++i) rows.push_back(modelio::to_json(calls[i]));
      const auto jcalls = ep_.judge_ledger->calls();
      for (std::size_t i = logged_judge_calls_; i < jcalls.size(); ++i) {
        auto row = modelio::to_json(jcalls[i]);
        row["ledger"] = "judge";
        rows.push_back(row);
      }
      // Worker threads interleave calls; a canonical order keeps the file
      // independent of parallelism.
      std::vector<std::string> lines;
      for (const auto& r : rows) lines.push_back(r.dump());
      std::sort(lines.begin(), lines.end());
      std::string text;
      for (const auto& l : lines) text += l + "\n";
      files.emplace_back("calls.jsonl", text);
    }
    files.emplace_back("ledger.json", st.ledger.dump(2) + "\n");
    {
      nlohmann::ordered_json sj;
      sj["id"] = new_state.id;
      sj["payload"] = new_state.payload;
      files.emplace_back("student.json", sj.dump(2) + "\n");
    }
    for (const auto& [name, content] : files) {
      detail::write_file_atomic(dir / name, content);
      st.artifacts[name] = detail::digest(content);
    }

    logged_calls_ = ep_.ledger->call_count();
    logged_judge_calls_ = ep_.judge_ledger->call_count();
    history_ = std::move(history);
    accumulated_ = std::move(train);
    state_ = new_state;
    for (const auto& id : selected) previously_selected_.insert(id);
    return st;
  }

  const modelio::StudentState& state() const { return state_; }
  void set_state(modelio::StudentState s) { state_ = std::move(s); }
  const synthgen::PromptTemplate& prompt_template() const { return template_; }
  const verify::Verifier& verifier() const { return verifier_; }
  synthgen::DedupHistory& history() { return history_; }

  void note(int t, const std::string& msg) const {
    if (progress_) progress_(seed_, t, msg);
  }

  void verify_artifacts(const std::filesystem::path& dir, const IterationState& s) const {
    for (auto it = s.artifacts.begin(); it != s.artifacts.end(); ++it) {
      const auto path = dir / it.key();
      if (!std::filesystem::exists(path)) {
        throw IntegrityError("missing artifact " + path.string());
      }
      if (detail::digest(detail::read_file(path)) != it.value().get<std::string>()) {
        throw IntegrityError("artifact " + path.string() + " does not match the manifest digest");
      }
    }
  }

  std::string prompt_for(const Sample& s) const {
    if (config_.data.kind == DatasetKind::kGame24Backward) {
      return synthgen::render_answer_prompt(template_, synthgen::format_numbers(synthgen::game24_numbers(s)));
    }
    return synthgen::render_answer_prompt(template_, s.question);
  }

  std::vector<std::string> predict(const modelio::StudentState& state,
                                   const std::vector<const Sample*>& samples) {
    return detail::parallel_map<std::string>(samples.size(), config_.parallelism, [&](std::size_t i) {
      const std::string prompt = prompt_for(*samples[i]);
      if (auto hit = cache_.get(state.id, prompt)) return *hit;
      auto text = modelio::student_greedy_generate(*ep_.student, state, prompt);
      cache_.put(state.id, prompt, text);
      return text;
    });
  }


  std::vector<scoring::Score> score(const modelio::StudentState& state,
                                    const std::vector<const Sample*>& samples, std::uint64_t seed) {
    using scoring::ScorerKind;
    const auto kind = config_.scorer;
    std::vector<std::string> answers;
    if (scoring::uses_self_prediction(kind)) {
      answers = predict(state, samples);
    } else {
      for (auto* s : samples) answers.push_back(s->answer);
    }
    return detail::parallel_map<scoring::Score>(samples.size(), config_.parallelism, [&](std::size_t i) {
      const Sample& s = *samples[i];
      scoring::Score out;
      out.sample_id = s.id;
      out.kind = kind;
      switch (kind) {
        case ScorerKind::kLossSelf:
        case ScorerKind::kLossGt:
          out.value = scoring::sequence_loss(
              modelio::answer_logprobs(*ep_.student, state, prompt_for(s), answers[i]));
          break;
        case ScorerKind::kRewardSelf:
        case ScorerKind::kRewardGt:
          out.value = modelio::reward_score(*ep_.reward, s.question, answers[i]);
          break;
        case ScorerKind::kJudgePair: {
          const auto js = scoring::judge_pair_score(
              *ep_.teacher, s.question, answers[i], prompt_for(s), config_.template_dir,
              detail::derive_seed(seed, "judge", {detail::fnv1a64(s.id)}));
          out.value = js.student;
          out.aux = js;
          break;
        }
        case ScorerKind::kCorrectness:
          out.value = scoring::correctness_score(s, answers[i], verifier_);
          break;
        case ScorerKind::kRandom: {
          detail::Rng rng(detail::derive_seed(seed, "random_score", {detail::fnv1a64(s.id)}));
          out.value = rng.uniform();
          break;
        }
      }
      scoring::validate(out);
      return out;
    });
  }

  std::vector<scoring::GradEmbedding> embed(const modelio::StudentState& state,
                                            const std::vector<const Sample*>& samples) {
    const auto answers = predict(state, samples);
    auto raw = detail::parallel_map<std::vector<double>>(samples.size(), config_.parallelism,
                                                         [&](std::size_t i) {
      return scoring::grad_embedding(
          modelio::grad_features(*ep_.student, state, prompt_for(*samples[i]), answers[i]));
    });
    const std::size_t dim = raw.empty() ? 0 : raw.front().size();
    const std::size_t d = std::min(config_.projection_dim, dim);
    const std::uint64_t proj_seed = detail::derive_seed(seed_, "projection");
    std::vector<scoring::GradEmbedding> out(samples.size());
    detail::parallel_for(samples.size(), config_.parallelism, [&](std::size_t i) {
      if (raw[i].size() != dim) {
        throw ValidationError("gradient embedding dimensions differ within a batch");
      }
      out[i].sample_id = samples[i]->id;
      out[i].vector = d == dim ? raw[i] : scoring::sparse_project(raw[i], d, proj_seed);
    });
    return out;
  }

  verify::AccuracyResult evaluate(const modelio::StudentState& state,
                                  std::vector<verify::Verdict>* verdicts) {
    std::vector<const Sample*> samples;
    for (const auto& s : data_.test) samples.push_back(&s);
    const auto preds = predict(state, samples);
    auto vs = detail::parallel_map<verify::Verdict>(samples.size(), config_.parallelism,
                                                    [&](std::size_t i) {
      return verifier_(*samples[i], preds[i]);
    });
    std::size_t correct = 0;
    for (const auto& v : vs) correct += v.correct ? 1 : 0;
    verify::AccuracyResult r;
    std::tie(r.mean, r.standard_error) = verify::binomial_mean_se(correct, samples.size());
    if (verdicts) *verdicts = std::move(vs);
    return r;
  }

 private:
  const RunConfig& config_;
  const Datasets& data_;
  Endpoints ep_;
  std::uint64_t seed_;
  std::filesystem::path out_;
  PredictionCache& cache_;
  const ProgressFn& progress_;
  synthgen::PromptTemplate template_;
  verify::Verifier verifier_;
  synthgen::DedupHistory history_;
  modelio::StudentState state_;
  Corpus accumulated_;
  std::set<std::string> previously_selected_;
  std::size_t logged_calls_ = 0;
  std::size_t logged_judge_calls_ = 0;
};

inline nlohmann::ordered_json data_summary(const Datasets& d) {
  nlohmann::ordered_json j;
  j["seed_size"] = d.seed.size();
  j["validation_size"] = d.validation.size();
  j["test_size"] = d.test.size();
  j["seed_digest"] = detail::digest(corpus_text(d.seed));
  j["validation_digest"] = detail::digest(corpus_text(d.validation));
  j["test_digest"] = detail::digest(corpus_text(d.test));
  return j;
}

inline void write_learning_curve(const RunManifest& m) {
  std::string csv = "seed,iteration,train_size,accuracy,standard_error,teacher_tokens\n";
  for (const auto& r : m.replicates) {
    for (const auto& s : r.iterations) {
      csv += std::to_string(r.seed) + "," + std::to_string(s.t) + "," + std::to_string(s.train_size) +
             "," + detail::format_double(s.accuracy) + "," + detail::format_double(s.standard_error) +
             "," + std::to_string(s.teacher_tokens) + "\n";
    }
  }
  detail::write_file_atomic(m.directory / "learning_curve.csv", csv);
}

inline void save_manifest(const RunManifest& m) {
  detail::write_file_atomic(m.directory / "manifest.json", to_json(m).dump(2) + "\n");
}

inline RunStatus overall_status(const RunManifest& m) {
  bool all_complete = true;
  for (const auto& r : m.replicates) {
    if (r.status == RunStatus::kFailed) return RunStatus::kFailed;
    if (r.status == RunStatus::kStoppedBudget) return RunStatus::kStoppedBudget;
    if (r.status != RunStatus::kComplete) all_complete = false;
  }
  return all_complete ? RunStatus::kComplete : RunStatus::kIncomplete;
}

inline RunManifest execute(const RunConfig& config, RunManifest manifest, const RunOptions& opts) {
  if (!opts.factory) throw ValidationError("no endpoint factory configured");
  const auto started = std::chrono::steady_clock::now();
  const Datasets data = load_datasets(config);
  const auto summary = data_summary(data);
  // Key order is irrelevant here.
  if (!manifest.data.empty() && nlohmann::json(manifest.data) != nlohmann::json(summary)) {
    throw IntegrityError("input corpora changed since the run started");
  }
  manifest.data = summary;
  PredictionCache cache;
  nlohmann::ordered_json timing;
  timing["replicates"] = nlohmann::ordered_json::object();

  for (auto& rep : manifest.replicates) {
    if (rep.status == RunStatus::kComplete) continue;
    const auto rep_started = std::chrono::steady_clock::now();
    Endpoints ep = opts.factory(config);
    Pipeline pipe(config, data, ep, rep.seed, manifest.directory, cache, opts.progress);
    pipe.restore(rep.iterations);
    if (rep.iterations.empty()) rep.base_accuracy = pipe.evaluate_base();
    rep.status = RunStatus::kIncomplete;
    rep.error.reset();
    int committed_now = 0;
    try {
      for (int t = static_cast<int>(rep.iterations.size()); t < config.iterations; ++t) {
        if (opts.stop_after_iterations && committed_now >= *opts.stop_after_iterations) break;
        rep.iterations.push_back(pipe.run_iteration(t));
        ++committed_now;
        manifest.status = overall_status(manifest);
        save_manifest(manifest);
      }
      if (static_cast<int>(rep.iterations.size()) == config.iterations) rep.status = RunStatus::kComplete;
    } catch (const BudgetError& e) {
      rep.status = RunStatus::kStoppedBudget;
      rep.error = e.what();
    } catch (const Error& e) {
      rep.status = RunStatus::kFailed;
      rep.error = e.what();
      manifest.status = RunStatus::kFailed;
      save_manifest(manifest);
      throw;
    }
    manifest.status = overall_status(manifest);
    save_manifest(manifest);
    timing["replicates"][std::to_string(rep.seed)] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - rep_started).count();
  }
  manifest.status = overall_status(manifest);
  save_manifest(manifest);
  write_learning_curve(manifest);
  timing["total_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  // Wall-clock lives outside the manifest so reruns stay byte-identical.
  detail::write_file_atomic(manifest.directory / "timing.json", timing.dump(2) + "\n");
  return manifest;
}

}  // namespace detail_engine

/// Runs the iterative loop for every replicate seed. Completed iterations are
/// committed to disk as they finish; budget exhaustion stops the affected
/// replicate gracefully with status stopped_budget.
inline RunManifest run(const RunConfig& config, RunOptions opts = {}) {
  validate(config);
  if (!opts.factory) opts.factory = default_endpoint_factory();
  RunManifest m;
  m.directory = config.output_dir;
  RunConfig stored = config;
  stored.output_dir.clear();
  m.config = to_json(stored);
  m.config_hash = config_hash(config);
  m.iterations = config.iterations;
  for (auto s : config.seeds) m.replicates.push_back(ReplicateRecord{s, RunStatus::kIncomplete, 0.0, {}, {}});
  std::error_code ec;
  std::filesystem::create_directories(m.directory, ec);
  if (ec) throw IoError("cannot create output directory " + m.directory.string() + ": " + ec.message());
  // Start from a clean slate; stale iteration folders would confuse resume.
  for (auto s : config.seeds) std::filesystem::remove_all(replicate_dir(m.directory, s), ec);
  detail::write_file_atomic(m.directory / "config.toml", to_toml(stored));
  detail_engine::save_manifest(m);
  return detail_engine::execute(config, std::move(m), opts);
}

/// Reads the config copy stored next to a manifest.
inline RunConfig stored_config(const std::filesystem::path& dir) {
  auto root = toml_io::parse_file(dir / "config.toml");
  auto c = run_config_from_json(root);
  c.output_dir = dir;
  return c;
}

/// Continues a run from its first incomplete iteration. When `config` is
/// given it must hash to the manifest's config hash.
inline RunManifest resume(const std::filesystem::path& manifest_path,
                          std::optional<RunConfig> config = std::nullopt, RunOptions opts = {}) {
  auto m = load_manifest(manifest_path);
  RunConfig c = config ? *config : stored_config(m.directory);
  c.output_dir = m.directory;
  validate(c);
  if (config_hash(c) != m.config_hash) {
    throw IntegrityError("config hash " + config_hash(c) + " does not match manifest hash " +
                         m.config_hash);
  }
  if (m.status == RunStatus::kComplete) return m;
  if (!opts.factory) opts.factory = default_endpoint_factory();
  // Budget caps are operational and may have been raised for the resume.
  m.config["budget"] = to_json(c)["budget"];
  return detail_engine::execute(c, std::move(m), opts);
}

/// Resolved plan for --dry-run.
inline nlohmann::ordered_json plan(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash(c);
  j["output_dir"] = c.output_dir.generic_string();
  j["iterations"] = c.iterations;
  j["seeds"] = c.seeds;
  j["batch_size"] = c.selection.m;
  j["expected_train_sizes"] = nlohmann::ordered_json::array();
  for (int t = 0; t < c.iterations; ++t) {
    j["expected_train_sizes"].push_back(static_cast<std::size_t>(t + 1) * c.selection.m);
  }
  j["scorer"] = std::string(scoring::to_string(c.scorer));
  j["strategy"] = std::string(selection::to_string(c.selection.strategy));
  j["direction"] = std::string(selection::to_string(c.selection.direction));
  j["data"] = {{"kind", std::string(to_string(c.data.kind))}, {"source", c.data.source}};
  j["teacher"] = c.teacher.transport == modelio::Transport::kRemote ? "remote" : "simulated";
  j["student"] = c.student.transport == modelio::Transport::kRemote ? "remote" : "simulated";
  j["config"] = to_json(c);
  return j;
}

}  // namespace itersynth::engine
