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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "itersynth/corpus.hpp"
#include "itersynth/dataset.hpp"
#include "itersynth/detail/parallel.hpp"
#include "itersynth/detail/rng.hpp"
#include "itersynth/detail/text.hpp"
#include "itersynth/error.hpp"
#include "itersynth/modelio/endpoint.hpp"
#include "itersynth/prompts.hpp"
#include "itersynth/verify.hpp"

namespace itersynth::synthgen {

inline constexpr double kDefaultDedupThreshold = 0.7;

struct PromptTemplate {
  DatasetKind dataset_kind = DatasetKind::kGsm8kStyle;
  std::string question_template;
  std::string answer_template;
  int few_shot_k = 5;
  std::string few_shot_format;
  // Only used by the Game-of-24 path: the reasoning prompt for a known answer.
  std::string reasoning_template;

  /// Templates shipped with the library, optionally overridden by files in
  /// `template_dir`.
  static PromptTemplate builtin(DatasetKind kind, const std::filesystem::path& template_dir = {},
                                int few_shot_k = 5) {
    PromptTemplate t;
    t.dataset_kind = kind;
    t.few_shot_k = few_shot_k;
    const std::string prefix(asset_prefix(kind));
    if (kind == DatasetKind::kGame24Backward) {
      t.question_template = load_asset("game24_backward", template_dir);
      t.answer_template = load_asset("game24_answer", template_dir);
      t.reasoning_template = load_asset("game24_reasoning", template_dir);
      t.few_shot_k = 0;
    } else {
      t.question_template = load_asset(prefix + "_question", template_dir);
      t.answer_template = load_asset(prefix + "_answer", template_dir);
      t.few_shot_format = load_asset(prefix + "_fewshot", template_dir);
    }
    return t;
  }
};

inline void validate(const PromptTemplate& t) {
  if (t.few_shot_k < 0) throw ValidationError("few_shot_k must be >= 0");
}

enum class RejectReason { kDuplicate, kVerifierFailed, kTeacherError };

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kDuplicate: return "duplicate";
    case RejectReason::kVerifierFailed: return "verifier_failed";
    case RejectReason::kTeacherError: return "teacher_error";
  }
  return "teacher_error";
}

struct SynthesisOutcome {
  std::string exemplar_id;
  std::string question;
  std::string answer;
  bool accepted = false;
  std::optional<RejectReason> reject_reason;
  std::optional<std::string> detail;
  std::map<std::string, std::string> meta;
  bool budget_exhausted = false;
};

inline nlohmann::ordered_json to_json(const SynthesisOutcome& o) {
  nlohmann::ordered_json j;
  j["exemplar_id"] = o.exemplar_id;
  j["question"] = o.question;
  j["answer"] = o.answer;
  j["accepted"] = o.accepted;
  j["reject_reason"] = o.reject_reason ? nlohmann::ordered_json(std::string(to_string(*o.reject_reason)))
                                       : nlohmann::ordered_json(nullptr);
  j["detail"] = o.detail ? nlohmann::ordered_json(*o.detail) : nlohmann::ordered_json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Prompt rendering

namespace detail_sg {

inline const std::string& require_meta(const Sample& s, const std::string& key) {
  auto it = s.meta.find(key);
  if (it == s.meta.end()) {
    throw TemplateError("sample '" + s.id + "' lacks '" + key + "' metadata");
  }
  return it->second;
}

// Pronto questions are "<context> Question: <query>" unless split in meta.
inline std::pair<std::string, std::string> pronto_parts(const Sample& s) {
  auto c = s.meta.find("context");
  auto q = s.meta.find("query");
  if (c != s.meta.end() && q != s.meta.end()) return {c->second, q->second};
  static constexpr std::string_view kMarker = "Question:";
  const auto pos = std::string_view(s.question).rfind(kMarker);
  if (pos == std::string_view::npos) return {s.question, ""};
  return {std::string(detail::trim(std::string_view(s.question).substr(0, pos))),
          std::string(detail::trim(std::string_view(s.question).substr(pos + kMarker.size())))};
}

inline std::string render_few_shot(const PromptTemplate& t, const Sample& s) {
  PromptVars vars{{"question", s.question}, {"answer", s.answer}};
  if (t.dataset_kind == DatasetKind::kMathCategoryStyle) {
    vars["category"] = require_meta(s, "category");
  }
  if (t.dataset_kind == DatasetKind::kProntoStyle) {
    auto [context, query] = pronto_parts(s);
    vars["context"] = context;
    vars["query"] = query;
  }
  return render_template(t.few_shot_format, vars);
}

// Teachers often echo the section header; strip it from the new question.
inline std::string clean_generated_question(std::string_view text) {
  std::string_view v = detail::trim(text);
  static constexpr std::string_view kHeader = "#Rewritten Instruction#:";
  if (const auto pos = v.find(kHeader); pos != std::string_view::npos) {
    v = detail::trim(v.substr(pos + kHeader.size()));
  }
  return std::string(v);
}

}  // namespace detail_sg

/// Game-of-24 numbers for a sample: meta "numbers" if present, else the
/// integers in the question.
inline std::vector<std::int64_t> game24_numbers(const Sample& s) {
  if (auto it = s.meta.find("numbers"); it != s.meta.end()) {
    return verify::parse_integers(it->second);
  }
  return verify::parse_integers(s.question);
}

inline std::string format_numbers(std::vector<std::int64_t> numbers) {
  std::sort(numbers.begin(), numbers.end());
  std::string out;
  for (auto n : numbers) {
    if (!out.empty()) out += ' ';
    out += std::to_string(n);
  }
  return out;
}

/// Reference expression of a Game-of-24 answer: the last boxed span, or the
/// text after the last "Answer:".
inline std::string game24_solution(const Sample& s) {
  if (auto boxed = verify::try_extract_boxed(s.answer)) return *boxed;
  const auto pos = s.answer.rfind("Answer:");
  if (pos != std::string::npos) {
    std::string_view tail = detail::trim(std::string_view(s.answer).substr(pos + 7));
    if (const auto eol = tail.find('\n'); eol != std::string_view::npos) tail = tail.substr(0, eol);
    return std::string(detail::trim(tail));
  }
  return std::string(detail::trim(s.answer));
}

inline modelio::ChatRequest render_question_prompt(const PromptTemplate& t,
                                                   const std::vector<Sample>& few_shot,
                                                   const Sample& exemplar) {
  validate(t);
  PromptVars vars;
  if (t.dataset_kind == DatasetKind::kGame24Backward) {
    vars["numbers"] = format_numbers(game24_numbers(exemplar));
    vars["solution"] = game24_solution(exemplar);
  } else {
    std::string examples;
    for (const auto& s : few_shot) {
      if (!examples.empty()) examples += '\n';
      examples += detail_sg::render_few_shot(t, s);
    }
    vars["examples"] = examples;
    vars["question"] = exemplar.question;
    if (t.dataset_kind == DatasetKind::kMathCategoryStyle) {
      const std::string& category = detail_sg::require_meta(exemplar, "category");
      for (const auto& s : few_shot) {
        if (detail_sg::require_meta(s, "category") != category) {
          throw ValidationError("few-shot sample '" + s.id + "' is not in category '" +
                                category + "'");
        }
      }
      vars["category"] = category;
    }
  }
  return modelio::ChatRequest::user(render_template(t.question_template, vars));
}

/// The dataset's answer prompt for `question`; also what the student sees.
inline std::string render_answer_prompt(const PromptTemplate& t, std::string_view question) {
  return render_template(t.answer_template, {{"question", std::string(question)}});
}

/// k exemplars drawn uniformly without replacement from the seed corpus,
/// excluding `exemplar`; math draws stay within the exemplar's category.
inline std::vector<Sample> draw_few_shot(const Corpus& seed_corpus, const Sample& exemplar,
                                         const PromptTemplate& t, std::uint64_t seed) {
  if (t.few_shot_k <= 0) return {};
  std::vector<const Sample*> pool;
  const std::string* category = nullptr;
  if (t.dataset_kind == DatasetKind::kMathCategoryStyle) {
    category = &detail_sg::require_meta(exemplar, "category");
  }
  for (const auto& s : seed_corpus) {
    if (s.id == exemplar.id) continue;
    if (category) {
      auto it = s.meta.find("category");
      if (it == s.meta.end() || it->second != *category) continue;
    }
    pool.push_back(&s);
  }
  detail::Rng rng(detail::derive_seed(seed, "few_shot"));
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(t.few_shot_k), pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<Sample> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(*pool[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Teacher calls

namespace detail_sg {

inline modelio::ChatRequest teacher_request(const modelio::ModelEndpoint& teacher,
                                            modelio::ChatRequest req, std::uint64_t seed) {
  req.temperature = teacher.config().temperature;
  req.max_output_tokens = teacher.config().max_output_tokens;
  req.seed = seed;
  return req;
}

template <typename Fn>
SynthesisOutcome guard_teacher(const std::string& exemplar_id, Fn&& fn) {
  try {
    return fn();
  } catch (const BudgetError& e) {
    SynthesisOutcome o;
    o.exemplar_id = exemplar_id;
    o.reject_reason = RejectReason::kTeacherError;
    o.detail = e.what();
    o.budget_exhausted = true;
    return o;
  } catch (const TransportError& e) {
    SynthesisOutcome o;
    o.exemplar_id = exemplar_id;
    o.reject_reason = RejectReason::kTeacherError;
    o.detail = e.what();
    return o;
  } catch (const ProtocolError& e) {
    SynthesisOutcome o;
    o.exemplar_id = exemplar_id;
    o.reject_reason = RejectReason::kTeacherError;
    o.detail = e.what();
    return o;
  }
}

}  // namespace detail_sg

/// x̂ = teacher(question prompt), ŷ = teacher(answer prompt for x̂).
/// Teacher failures come back as teacher_error outcomes.
inline SynthesisOutcome synthesize_pair(const modelio::ModelEndpoint& teacher,
                                        const PromptTemplate& t,
                                        const std::vector<Sample>& few_shot,
                                        const Sample& exemplar, std::uint64_t seed) {
  const auto question_req = render_question_prompt(t, few_shot, exemplar);
  return detail_sg::guard_teacher(exemplar.id, [&] {
    SynthesisOutcome o;
    o.exemplar_id = exemplar.id;
    const auto q = modelio::chat(
        teacher,
        detail_sg::teacher_request(teacher, question_req, detail::derive_seed(seed, "question")),
        nullptr, "synth_question");
    o.question = detail_sg::clean_generated_question(q.text);
    if (o.question.empty()) {
      o.reject_reason = RejectReason::kTeacherError;
      o.detail = "teacher returned an empty question";
      return o;
    }
    const auto a = modelio::chat(
        teacher,
        detail_sg::teacher_request(
            teacher, modelio::ChatRequest::user(render_answer_prompt(t, o.question)),
            detail::derive_seed(seed, "answer")),
        nullptr, "synth_answer");
    o.answer = std::string(detail::trim(a.text));
    o.meta = exemplar.meta;
    o.accepted = true;
    return o;
  });
}

/// Backward reasoning: the teacher rewrites a known solution into a new
/// boxed expression, kept only if it verifies; a second call writes the
/// step-by-step answer.
inline SynthesisOutcome backward_24_generate(const modelio::ModelEndpoint& teacher,
                                             const PromptTemplate& t, const Sample& solution,
                                             std::uint64_t seed) {
  {
    const auto nums = game24_numbers(solution);
    const auto check = verify::check_24(nums, game24_solution(solution));
    if (!check.ok) {
      throw ValidationError("exemplar '" + solution.id +
                            "' does not hold a valid 24 solution: " + check.detail);
    }
  }
  const auto req = render_question_prompt(t, {}, solution);
  return detail_sg::guard_teacher(solution.id, [&] {
    SynthesisOutcome o;
    o.exemplar_id = solution.id;
    const auto proposal = modelio::chat(
        teacher, detail_sg::teacher_request(teacher, req, detail::derive_seed(seed, "backward")),
        nullptr, "synth_backward");
    auto expr = verify::try_extract_boxed(proposal.text);
    if (!expr) {
      o.reject_reason = RejectReason::kVerifierFailed;
      o.detail = "no boxed expression";
      return o;
    }
    if (detail::to_lower_ascii(*expr) == "null") {
      o.reject_reason = RejectReason::kVerifierFailed;
      o.detail = "teacher returned null";
      return o;
    }
    std::vector<std::int64_t> numbers;
    std::string lhs = *expr;
    if (const auto eq = lhs.find('='); eq != std::string::npos) lhs.resize(eq);
    try {
      numbers = verify::evaluate_expression(lhs).literals;
    } catch (const Error& e) {
      o.reject_reason = RejectReason::kVerifierFailed;
      o.detail = e.what();
      return o;
    }
    const auto check = verify::check_24(numbers, *expr);
    if (numbers.size() != 4 || !check.ok) {
      o.reject_reason = RejectReason::kVerifierFailed;
      o.detail = numbers.size() != 4 ? "expression does not use four numbers" : check.detail;
      return o;
    }
    o.question = format_numbers(numbers);
    o.meta["numbers"] = o.question;
    const auto steps = modelio::chat(
        teacher,
        detail_sg::teacher_request(
            teacher,
            modelio::ChatRequest::user(render_template(
                t.reasoning_template, {{"question", o.question}, {"answer", lhs}})),
            detail::derive_seed(seed, "reasoning")),
        nullptr, "synth_reasoning");
    o.answer = std::string(detail::trim(steps.text));
    if (!verify::try_extract_boxed(o.answer)) {
      o.answer += "\n\\boxed{" + std::string(detail::trim(lhs)) + "}";
    }
    o.accepted = true;
    return o;
  });
}

// ---------------------------------------------------------------------------
// Deduplication

/// ROUGE-L F1 over lowercase whitespace tokens. Both empty → 1, one empty → 0.
inline double rouge_l_tokens(const std::vector<std::string>& a,
                             const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[b.size()]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(b.size());
  const double r = lcs / static_cast<double>(a.size());
  return 2.0 * p * r / (p + r);
}

inline std::vector<std::string> rouge_tokens(std::string_view text) {
  return detail::split_whitespace(detail::to_lower_ascii(text));
}

inline double rouge_l(std::string_view a, std::string_view b) {
  return rouge_l_tokens(rouge_tokens(a), rouge_tokens(b));
}

/// Run-global memory of generated questions.
class DedupHistory {
 public:
  explicit DedupHistory(double threshold = kDefaultDedupThreshold) : threshold_(threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
      throw ValidationError("dedup threshold must lie in (0, 1]");
    }
  }

  double threshold() const { return threshold_; }
  std::size_t size() const { return questions_.size(); }
  const std::vector<std::string>& questions() const { return questions_; }

  double max_similarity(std::string_view candidate) const {
    const auto tokens = rouge_tokens(candidate);
    double best = 0.0;
    for (const auto& h : tokens_) best = std::max(best, rouge_l_tokens(tokens, h));
    return best;
  }

  bool accepts(std::string_view candidate) const {
    return max_similarity(candidate) < threshold_;
  }

  void add(std::string question) {
    tokens_.push_back(rouge_tokens(question));
    questions_.push_back(std::move(question));
  }

 private:
  double threshold_;
  std::vector<std::string> questions_;
  std::vector<std::vector<std::string>> tokens_;
};

/// Accept iff every history item scores below `threshold`.
inline bool dedup_filter(std::string_view candidate, const std::vector<std::string>& history,
                         double threshold = kDefaultDedupThreshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ValidationError("dedup threshold must lie in (0, 1]");
  }
  const auto tokens = rouge_tokens(candidate);
  for (const auto& h : history) {
    if (rouge_l_tokens(tokens, rouge_tokens(h)) >= threshold) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Batch synthesis

struct BatchResult {
  std::vector<Sample> accepted;
  std::vector<SynthesisOutcome> outcomes;
  std::vector<GenerationRecord> records;
  std::size_t attempts = 0;
  bool budget_exhausted = false;
};

struct BatchRequest {
  int iteration = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  std::size_t parallelism = 1;
  std::string scorer_kind;
  // Cap on teacher attempts; 0 means 3·m.
  std::size_t max_attempts = 0;
};

/// Synthesizes until m samples are accepted or the attempt cap is hit.
/// Attempt i uses exemplars[i mod |exemplars|], so rejected candidates are
/// replaced by the next-ranked exemplar. Calls run concurrently in waves;
/// acceptance is decided sequentially in attempt order, so results do not
/// depend on the parallelism bound.
inline BatchResult synthesize_batch(const modelio::ModelEndpoint& teacher,
                                    const PromptTemplate& t, const Corpus& seed_corpus,
                                    const std::vector<std::string>& exemplars,
                                    const std::vector<std::optional<double>>& exemplar_scores,
                                    DedupHistory& history, const BatchRequest& req) {
  if (exemplars.empty()) throw ValidationError("no exemplars to synthesize from");
  if (exemplar_scores.size() != exemplars.size()) {
    throw ValidationError("exemplar scores do not match exemplars");
  }
  const std::size_t cap = req.max_attempts > 0 ? req.max_attempts : 3 * req.m;
  const bool use_dedup = t.dataset_kind != DatasetKind::kGame24Backward;
  BatchResult out;
  while (out.accepted.size() < req.m && out.attempts < cap && !out.budget_exhausted) {
    const std::size_t wave = std::min(req.m - out.accepted.size(), cap - out.attempts);
    const std::size_t base = out.attempts;
    auto results = detail::parallel_map<SynthesisOutcome>(
        wave, req.parallelism, [&](std::size_t k) {
          const std::size_t attempt = base + k;
          const Sample& exemplar = seed_corpus.at(exemplars[attempt % exemplars.size()]);
          const std::uint64_t s = detail::derive_seed(
              req.seed, "synth", {static_cast<std::uint64_t>(req.iteration), attempt});
          if (t.dataset_kind == DatasetKind::kGame24Backward) {
            return backward_24_generate(teacher, t, exemplar, s);
          }
          return synthesize_pair(teacher, t, draw_few_shot(seed_corpus, exemplar, t, s),
                                 exemplar, s);
        });
    out.attempts += wave;
    for (std::size_t k = 0; k < results.size(); ++k) {
      auto& o = results[k];
      if (o.budget_exhausted) out.budget_exhausted = true;
      if (o.accepted && use_dedup) {
        const double sim = history.max_similarity(o.question);
        if (sim >= history.threshold()) {
          o.accepted = false;
          o.reject_reason = RejectReason::kDuplicate;
          o.detail = "rouge-l " + detail::format_fixed(sim, 4);
        }
      }
      if (o.accepted) {
        if (use_dedup) history.add(o.question);
        const std::size_t attempt = base + k;
        Sample s;
        s.id = synthetic_id(req.iteration, out.accepted.size());
        s.question = o.question;
        s.answer = o.answer;
        s.origin = Origin::kSynthetic;
        s.parent_id = o.exemplar_id;
        s.iteration = req.iteration;
        s.meta = o.meta;
        out.records.push_back(GenerationRecord{o.exemplar_id, s.id, req.iteration,
                                               exemplar_scores[attempt % exemplars.size()],
                                               req.scorer_kind, std::nullopt, std::nullopt});
        out.accepted.push_back(std::move(s));
      }
      out.outcomes.push_back(std::move(o));
    }
  }
  return out;
}

}  // namespace itersynth::synthgen
