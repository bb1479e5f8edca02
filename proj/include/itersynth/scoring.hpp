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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "itersynth/corpus.hpp"
#include "itersynth/detail/rng.hpp"
#include "itersynth/detail/text.hpp"
#include "itersynth/error.hpp"
#include "itersynth/modelio/endpoint.hpp"
#include "itersynth/prompts.hpp"
#include "itersynth/verify.hpp"

namespace itersynth::scoring {

enum class ScorerKind {
  kLossSelf,
  kLossGt,
  kRewardSelf,
  kRewardGt,
  kJudgePair,
  kCorrectness,
  kRandom,
};

inline std::string_view to_string(ScorerKind k) {
  switch (k) {
    case ScorerKind::kLossSelf: return "loss_self";
    case ScorerKind::kLossGt: return "loss_gt";
    case ScorerKind::kRewardSelf: return "reward_self";
    case ScorerKind::kRewardGt: return "reward_gt";
    case ScorerKind::kJudgePair: return "judge_pair";
    case ScorerKind::kCorrectness: return "correctness";
    case ScorerKind::kRandom: return "random";
  }
  return "random";
}

inline ScorerKind scorer_kind_from_string(std::string_view s) {
  for (auto k : {ScorerKind::kLossSelf, ScorerKind::kLossGt, ScorerKind::kRewardSelf,
                 ScorerKind::kRewardGt, ScorerKind::kJudgePair, ScorerKind::kCorrectness,
                 ScorerKind::kRandom}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown scorer kind '" + std::string(s) + "'");
}

// Self-prediction scorers evaluate the student's own greedy answer; the
// ground-truth variants substitute the reference answer.
inline bool uses_self_prediction(ScorerKind k) {
  return k == ScorerKind::kLossSelf || k == ScorerKind::kRewardSelf ||
         k == ScorerKind::kJudgePair || k == ScorerKind::kCorrectness;
}

struct JudgeScores {
  double teacher = 0.0;
  double student = 0.0;

  bool operator==(const JudgeScores&) const = default;
};

struct Score {
  std::string sample_id;
  ScorerKind kind = ScorerKind::kRandom;
  double value = 0.0;
  std::optional<JudgeScores> aux;

  bool operator==(const Score&) const = default;
};

inline void validate(const Score& s) {
  if (!std::isfinite(s.value)) {
    throw ValidationError("score for '" + s.sample_id + "' is not finite");
  }
  if (s.kind == ScorerKind::kJudgePair) {
    if (!s.aux) throw ValidationError("judge_pair score without judge scores");
    for (double v : {s.aux->teacher, s.aux->student}) {
      if (v < 1.0 || v > 10.0) throw ValidationError("judge score outside [1, 10]");
    }
  }
  if (s.kind == ScorerKind::kCorrectness && s.value != 0.0 && s.value != 1.0) {
    throw ValidationError("correctness score must be 0 or 1");
  }
}

/// Teacher-minus-student gap; the "LLM-as-a-judge (hard)" ranking key.
inline double judge_gap(const Score& s) {
  if (!s.aux) throw ValidationError("score for '" + s.sample_id + "' has no judge scores");
  return s.aux->teacher - s.aux->student;
}

inline nlohmann::ordered_json to_json(const Score& s) {
  nlohmann::ordered_json j;
  j["sample_id"] = s.sample_id;
  j["scorer_kind"] = std::string(to_string(s.kind));
  j["value"] = s.value;
  if (s.aux) {
    j["aux"] = nlohmann::ordered_json::array({s.aux->teacher, s.aux->student});
  } else {
    j["aux"] = nullptr;
  }
  return j;
}

inline Score score_from_json(const nlohmann::json& j) {
  Score s;
  s.sample_id = j.at("sample_id").get<std::string>();
  s.kind = scorer_kind_from_string(j.at("scorer_kind").get<std::string>());
  s.value = j.at("value").get<double>();
  if (j.contains("aux") && !j.at("aux").is_null()) {
    const auto& a = j.at("aux");
    if (!a.is_array() || a.size() != 2) throw ParseError("aux must be a 2-element array");
    s.aux = JudgeScores{a[0].get<double>(), a[1].get<double>()};
  }
  return s;
}

inline void write_scores(std::ostream& out, const std::vector<Score>& scores) {
  for (const auto& s : scores) out << to_json(s).dump() << '\n';
}

inline std::vector<Score> read_scores(std::istream& in, std::string_view source = "scores") {
  std::vector<Score> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    try {
      out.push_back(score_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(std::string(source) + ": line " + std::to_string(lineno) + ": " +
                       e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequence loss

/// Mean negative log-likelihood: −(1/|y|) Σ log p(y_j | x, y_<j).
inline double sequence_loss(const std::vector<double>& logprobs) {
  if (logprobs.empty()) throw DegenerateInputError("sequence_loss of an empty sequence");
  double sum = 0.0;
  for (double lp : logprobs) {
    if (!(lp <= 0.0)) throw ValidationError("log-probabilities must be <= 0");
    sum -= lp;
  }
  return sum / static_cast<double>(logprobs.size());
}

inline double sequence_loss(const std::vector<modelio::TokenLogprob>& logprobs) {
  std::vector<double> values;
  values.reserve(logprobs.size());
  for (const auto& t : logprobs) values.push_back(t.logprob);
  return sequence_loss(values);
}

// ---------------------------------------------------------------------------
// Pairwise LLM-as-a-judge

/// Reads (teacher, student) scores from a judge completion. The format asks
/// for both scores alone on the first line, so that line wins when it holds
/// exactly two numbers; otherwise the last two numbers in the text are used.
/// Values are clamped to [1, 10].
inline std::optional<JudgeScores> parse_judge_scores(std::string_view completion) {
  static const std::regex kNumber(R"((\d+(?:\.\d+)?))");
  auto numbers_in = [](const std::string& text) {
    std::vector<double> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), kNumber);
         it != std::sregex_iterator(); ++it) {
      out.push_back(std::stod((*it)[1].str()));
    }
    return out;
  };
  auto clamp = [](double v) { return std::clamp(v, 1.0, 10.0); };

  const std::string text(completion);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t eol = text.find('\n', pos);
    const std::string line =
        text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    if (!detail::trim(line).empty()) {
      const auto first = numbers_in(line);
      if (first.size() == 2) return JudgeScores{clamp(first[0]), clamp(first[1])};
      break;
    }
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  const auto all = numbers_in(text);
  if (all.size() < 2) return std::nullopt;
  return JudgeScores{clamp(all[all.size() - 2]), clamp(all[all.size() - 1])};
}

/// The teacher answers the question itself, then rates its own answer
/// (assistant 1) against the student's (assistant 2). Both calls are charged
/// to the teacher. Unparseable verdicts are re-asked up to twice.
inline JudgeScores judge_pair_score(const modelio::ModelEndpoint& teacher,
                                    std::string_view question,
                                    std::string_view student_answer,
                                    std::string_view answer_prompt,
                                    const std::filesystem::path& template_dir = {},
                                    std::uint64_t seed = 0) {
  teacher.require(modelio::Capability::kGenerate);
  modelio::ChatRequest answer_req = modelio::ChatRequest::user(std::string(answer_prompt));
  answer_req.temperature = teacher.config().temperature;
  answer_req.max_output_tokens = teacher.config().max_output_tokens;
  answer_req.seed = seed;
  const std::string teacher_answer =
      modelio::chat(teacher, answer_req, nullptr, "judge_teacher_answer").text;

  modelio::ChatRequest judge_req = modelio::ChatRequest::user(
      render_template(load_asset("judge_pair", template_dir),
                      {{"question", std::string(question)},
                       {"answer_1", teacher_answer},
                       {"answer_2", std::string(student_answer)}}));
  judge_req.temperature = 0.0;
  judge_req.max_output_tokens = teacher.config().max_output_tokens;
  std::string raw;
  for (int attempt = 0; attempt < 3; ++attempt) {
    judge_req.seed = detail::derive_seed(seed, "judge_reask", {std::uint64_t(attempt)});
    raw = modelio::chat(teacher, judge_req, nullptr, "judge_pair").text;
    if (auto parsed = parse_judge_scores(raw)) return *parsed;
  }
  throw JudgeParseError("judge output has no pair of scores after 2 re-asks", raw);
}

// ---------------------------------------------------------------------------
// Correctness

/// 1 when the verifier accepts the student answer, else 0.
inline double correctness_score(const Sample& sample, std::string_view student_answer,
                                const verify::Verifier& verifier) {
  return verifier(sample, student_answer).correct ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------
// Gradient embeddings

struct GradEmbedding {
  std::string sample_id;
  std::vector<double> vector;

  bool operator==(const GradEmbedding&) const = default;
};

/// Last-layer gradient of the cross-entropy with the target treated as
/// ground truth: per position (p − onehot(target)) ⊗ h, averaged over
/// positions. Layout is vocabulary-major: entry v·H + k.
inline std::vector<double> grad_embedding(const std::vector<std::vector<double>>& probs,
                                          const std::vector<std::size_t>& targets,
                                          const std::vector<std::vector<double>>& hidden) {
  if (probs.empty()) throw DegenerateInputError("grad_embedding needs at least one position");
  if (probs.size() != targets.size() || probs.size() != hidden.size()) {
    throw ValidationError("grad_embedding: probs, targets and hidden differ in length");
  }
  const std::size_t V = probs.front().size();
  const std::size_t H = hidden.front().size();
  if (V == 0 || H == 0) throw ValidationError("grad_embedding: empty vocabulary or hidden");
  std::vector<double> out(V * H, 0.0);
  for (std::size_t pos = 0; pos < probs.size(); ++pos) {
    const auto& p = probs[pos];
    const auto& h = hidden[pos];
    if (p.size() != V || h.size() != H) {
      throw ValidationError("grad_embedding: ragged input at position " + std::to_string(pos));
    }
    if (targets[pos] >= V) {
      throw ValidationError("grad_embedding: target out of vocabulary at position " +
                            std::to_string(pos));
    }
    double total = 0.0;
    for (double x : p) {
      if (!(x >= 0.0)) throw ValidationError("grad_embedding: negative probability");
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw ValidationError("grad_embedding: distribution at position " +
                            std::to_string(pos) + " sums to " + detail::format_double(total));
    }
    for (std::size_t v = 0; v < V; ++v) {
      const double err = p[v] - (v == targets[pos] ? 1.0 : 0.0);
      if (err == 0.0) continue;
      for (std::size_t k = 0; k < H; ++k) out[v * H + k] += err * h[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(probs.size());
  for (double& x : out) x *= inv;
  return out;
}

inline std::vector<double> grad_embedding(const modelio::GradientFeatures& f) {
  if (f.raw_vector) return *f.raw_vector;
  return grad_embedding(f.probs, f.targets, f.hidden);
}

inline constexpr int kProjectionDensity = 3;
inline constexpr std::size_t kDefaultProjectionDim = 1024;

/// Entry (row, col) of the sparse sign matrix scaled by √(s/d): ±√(s/d) each
/// with probability 1/(2s), zero otherwise. Hash-derived so any entry can be
/// recomputed without storing R.
inline double sparse_projection_entry(std::uint64_t seed, std::size_t row, std::size_t col,
                                      std::size_t d, int density = kProjectionDensity) {
  const std::uint64_t h = detail::splitmix64(
      detail::mix(detail::mix(seed, static_cast<std::uint64_t>(row)),
                  static_cast<std::uint64_t>(col)));
  const std::uint64_t bucket = h % static_cast<std::uint64_t>(2 * density);
  if (bucket >= 2) return 0.0;
  const double scale = std::sqrt(static_cast<double>(density) / static_cast<double>(d));
  return bucket == 0 ? scale : -scale;
}

/// y = R·x with R the d×D sparse sign projection for `seed`.
inline std::vector<double> sparse_project(const std::vector<double>& x, std::size_t d,
                                          std::uint64_t seed,
                                          int density = kProjectionDensity) {
  if (d < 1) throw ValidationError("projection dimension must be >= 1");
  if (d > x.size()) {
    throw ValidationError("projection dimension " + std::to_string(d) +
                          " exceeds input dimension " + std::to_string(x.size()));
  }
  if (density < 1) throw ValidationError("projection density must be >= 1");
  std::vector<double> y(d, 0.0);
  for (std::size_t col = 0; col < x.size(); ++col) {
    if (x[col] == 0.0) continue;
    for (std::size_t row = 0; row < d; ++row) {
      const double r = sparse_projection_entry(seed, row, col, d, density);
      if (r != 0.0) y[row] += r * x[col];
    }
  }
  return y;
}

inline nlohmann::ordered_json to_json(const GradEmbedding& g) {
  nlohmann::ordered_json j;
  j["sample_id"] = g.sample_id;
  j["vector"] = g.vector;
  return j;
}

}  // namespace itersynth::scoring
