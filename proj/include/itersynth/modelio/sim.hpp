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
#include <cmath>
#include <cstdint>
#include <optional>
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
#include "itersynth/verify.hpp"

// Deterministic stand-in for teacher, student and reward models. Questions
// carry a tag "[sim:t<topic>:d<difficulty>]"; the student's skill is a
// mastery level per topic and it answers correctly iff mastery ≥ difficulty.
namespace itersynth::modelio::sim {

struct SimConfig {
  int topics = 4;
  double slope = 10.0;                 // a in logistic(a·(μ − δ))
  std::vector<double> base_mastery{0.25};  // one value, or one per topic
  double eta = 0.08;                   // learning rate of the update rule
  double bump_center = 0.05;           // g peaks at δ − μ = center
  double bump_width = 0.12;
  double teacher_noise = 0.04;         // σ of child difficulty
  double reward_noise = 0.05;
  double filler_conf_lo = 0.7;         // filler-token probability at μ = 0
  double filler_conf_hi = 0.98;        // ... and at μ = 1
  int filler_vocab = 8;
  int question_words = 12;
  int vocab_per_topic = 40;
  std::uint64_t seed = 0;
};

inline void validate(const SimConfig& c) {
  if (c.topics < 1) throw ValidationError("sim.topics must be >= 1");
  if (!(c.slope > 0.0)) throw ValidationError("sim.slope must be > 0");
  if (c.base_mastery.empty() ||
      (c.base_mastery.size() != 1 && c.base_mastery.size() != static_cast<std::size_t>(c.topics))) {
    throw ValidationError("sim.base_mastery needs 1 or `topics` entries");
  }
  for (double m : c.base_mastery) {
    if (!(m >= 0.0 && m <= 1.0)) throw ValidationError("sim.base_mastery must lie in [0, 1]");
  }
  if (!(c.eta > 0.0 && c.eta <= 1.0)) throw ValidationError("sim.eta must lie in (0, 1]");
  if (!(c.bump_width > 0.0)) throw ValidationError("sim.bump_width must be > 0");
  if (!(c.teacher_noise >= 0.0) || !(c.reward_noise >= 0.0)) {
    throw ValidationError("sim noise scales must be >= 0");
  }
  if (!(c.filler_conf_lo > 0.0 && c.filler_conf_lo <= 1.0 && c.filler_conf_hi > 0.0 &&
        c.filler_conf_hi <= 1.0)) {
    throw ValidationError("sim filler confidences must lie in (0, 1]");
  }
  if (c.filler_vocab < 2) throw ValidationError("sim.filler_vocab must be >= 2");
  if (c.question_words < 1 || c.vocab_per_topic < 1) {
    throw ValidationError("sim question vocabulary must be non-empty");
  }
}

inline nlohmann::ordered_json to_json(const SimConfig& c) {
  nlohmann::ordered_json j;
  j["topics"] = c.topics;
  j["slope"] = c.slope;
  j["base_mastery"] = c.base_mastery;
  j["eta"] = c.eta;
  j["bump_center"] = c.bump_center;
  j["bump_width"] = c.bump_width;
  j["teacher_noise"] = c.teacher_noise;
  j["reward_noise"] = c.reward_noise;
  j["filler_conf_lo"] = c.filler_conf_lo;
  j["filler_conf_hi"] = c.filler_conf_hi;
  j["filler_vocab"] = c.filler_vocab;
  j["question_words"] = c.question_words;
  j["vocab_per_topic"] = c.vocab_per_topic;
  j["seed"] = c.seed;
  return j;
}

struct Tag {
  int topic = 0;
  double difficulty = 0.0;
};

inline std::string format_tag(const Tag& t) {
  return "[sim:t" + std::to_string(t.topic) + ":d" + detail::format_fixed(t.difficulty, 4) + "]";
}

/// Last tag in `text`, if any.
inline std::optional<Tag> find_tag(std::string_view text) {
  static const std::regex kTag(R"(\[sim:t(\d+):d([0-9.]+)\])");
  const std::string s(text);
  std::optional<Tag> out;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kTag); it != std::sregex_iterator();
       ++it) {
    out = Tag{std::stoi((*it)[1].str()), std::stod((*it)[2].str())};
  }
  return out;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Pure model of the simulated world.
class SimWorld {
 public:
  explicit SimWorld(SimConfig config) : config_(std::move(config)) { validate(config_); }

  const SimConfig& config() const { return config_; }

  std::vector<double> base_mastery() const {
    if (config_.base_mastery.size() == 1) {
      return std::vector<double>(static_cast<std::size_t>(config_.topics), config_.base_mastery[0]);
    }
    return config_.base_mastery;
  }

  double p_correct(double mastery, double difficulty) const {
    return logistic(config_.slope * (mastery - difficulty));
  }

  double filler_confidence(double mastery) const {
    return config_.filler_conf_lo + (config_.filler_conf_hi - config_.filler_conf_lo) * mastery;
  }

  double bump(double gap) const {
    const double z = (gap - config_.bump_center) / config_.bump_width;
    return std::exp(-0.5 * z * z);
  }

  /// μ += η(1 − μ)·g(δ − μ); stays in [0, 1].
  double update(double mastery, double difficulty) const {
    const double next = mastery + config_.eta * (1.0 - mastery) * bump(difficulty - mastery);
    return std::clamp(next, 0.0, 1.0);
  }

  std::string topic_word(int topic, std::uint64_t index) const {
    static constexpr std::string_view kSyllables[] = {"ka", "lo", "mi", "ren", "su", "ta",
                                                      "vo", "zel", "pri", "dun", "fa", "gor"};
    const std::uint64_t w = index % static_cast<std::uint64_t>(config_.vocab_per_topic);
    std::uint64_t h = detail::splitmix64(detail::mix(static_cast<std::uint64_t>(topic) + 101, w));
    std::string out;
    for (int i = 0; i < 3; ++i) {
      out += kSyllables[h % 12];
      h /= 12;
    }
    return out + std::to_string(topic);
  }

  std::string make_question(const Tag& tag, std::uint64_t seed) const {
    detail::Rng rng(detail::derive_seed(seed, "sim_question"));
    std::string q = format_tag(tag);
    for (int i = 0; i < config_.question_words; ++i) {
      q += ' ';
      q += topic_word(tag.topic, rng.below(static_cast<std::uint64_t>(config_.vocab_per_topic)));
    }
    return q + " ?";
  }

  // Final answer value is a hash of the question's identity.
  static std::int64_t answer_value(std::string_view question) {
    return static_cast<std::int64_t>(detail::fnv1a64(detail::trim(question)) % 900) + 100;
  }

  std::vector<std::string> filler_tokens(std::string_view question) const {
    std::vector<std::string> out{"step"};
    std::uint64_t h = detail::fnv1a64(detail::trim(question), 0x5eed);
    for (int i = 0; i < 5; ++i) {
      out.push_back("w" + std::to_string(h % static_cast<std::uint64_t>(config_.filler_vocab)));
      h = detail::splitmix64(h);
    }
    for (const char* w : {"so", "the", "answer", "is"}) out.emplace_back(w);
    return out;
  }

  std::string answer_text(std::string_view question, bool correct) const {
    std::string out = detail::join(filler_tokens(question), " ");
    const std::int64_t v = answer_value(question) + (correct ? 0 : 1);
    return out + " \\boxed{" + std::to_string(v) + "}";
  }

  // Per-token teacher-forced log-probabilities of `answer` for a student
  // with mastery μ on the question's topic.
  std::vector<TokenLogprob> logprobs(std::string_view question, std::string_view answer,
                                     double mastery) const {
    const auto tag = find_tag(question);
    const double difficulty = tag ? tag->difficulty : 0.5;
    const auto tokens = detail::split_whitespace(answer);
    const auto expected = filler_tokens(question);
    const double q = filler_confidence(mastery);
    const double miss = std::max(1e-12, (1.0 - q) / static_cast<double>(config_.filler_vocab - 1));
    const double p = p_correct(mastery, difficulty);
    const std::string correct_box = "\\boxed{" + std::to_string(answer_value(question)) + "}";
    const std::string wrong_box = "\\boxed{" + std::to_string(answer_value(question) + 1) + "}";
    std::vector<TokenLogprob> out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      double lp;
      if (i + 1 == tokens.size()) {
        if (tokens[i] == correct_box) {
          lp = std::log(std::max(p, 1e-12));
        } else if (tokens[i] == wrong_box) {
          lp = std::log(std::max(1.0 - p, 1e-12));
        } else {
          lp = std::log(1e-9);
        }
      } else if (i < expected.size() && tokens[i] == expected[i]) {
        lp = std::log(std::max(q, 1e-12));
      } else {
        lp = std::log(miss);
      }
      out.push_back({tokens[i], std::min(lp, 0.0)});
    }
    return out;
  }

  // Two-symbol head: index 0 is the expected token, 1 everything else.
  // h = [topic one-hot, δ, 1], damped at filler positions.
  GradientFeatures grad_features(std::string_view question, std::string_view answer,
                                 double mastery) const {
    const auto tag = find_tag(question);
    const int topic = tag ? tag->topic : 0;
    const double difficulty = tag ? tag->difficulty : 0.5;
    const auto lps = logprobs(question, answer, mastery);
    std::vector<double> h(static_cast<std::size_t>(config_.topics) + 2, 0.0);
    h[static_cast<std::size_t>(std::clamp(topic, 0, config_.topics - 1))] = 1.0;
    h[h.size() - 2] = difficulty;
    h[h.size() - 1] = 1.0;
    const double q = filler_confidence(mastery);
    const double p = p_correct(mastery, difficulty);
    GradientFeatures f;
    for (std::size_t i = 0; i < lps.size(); ++i) {
      const bool decision = i + 1 == lps.size();
      const double expected_p = decision ? p : q;
      f.probs.push_back({expected_p, 1.0 - expected_p});
      // Target 0 when the token is the likelier one under the student.
      const double tp = std::exp(lps[i].logprob);
      f.targets.push_back(std::abs(tp - expected_p) <= std::abs(tp - (1.0 - expected_p)) ? 0 : 1);
      std::vector<double> hi = h;
      if (!decision) {
        for (double& x : hi) x *= 0.1;
      }
      f.hidden.push_back(std::move(hi));
    }
    return f;
  }

  double reward(std::string_view question, std::string_view answer) const {
    const auto tag = find_tag(question);
    const double difficulty = tag ? tag->difficulty : 0.5;
    if (config_.reward_noise == 0.0) return -difficulty;
    detail::Rng rng(detail::derive_seed(config_.seed, "reward",
                                        {detail::fnv1a64(question), detail::fnv1a64(answer)}));
    return -difficulty + config_.reward_noise * rng.normal();
  }

  /// Fresh training from base mastery: sequential updates in corpus order for
  /// each epoch, keeping the epoch with the best validation accuracy.
  std::vector<double> train(const Corpus& corpus, const Corpus& validation, int epochs) const {
    std::vector<Tag> tags;
    tags.reserve(corpus.size());
    for (const auto& s : corpus) {
      if (auto t = find_tag(s.question)) tags.push_back(*t);
    }
    auto mastery = base_mastery();
    auto best = mastery;
    double best_acc = validation.empty() ? -1.0 : accuracy(validation, mastery);
    bool have_best = false;
    for (int e = 0; e < epochs; ++e) {
      for (const auto& t : tags) {
        if (t.topic < 0 || t.topic >= config_.topics) continue;
        auto& mu = mastery[static_cast<std::size_t>(t.topic)];
        mu = update(mu, t.difficulty);
      }
      const double acc = validation.empty() ? 0.0 : accuracy(validation, mastery);
      if (!have_best || acc > best_acc || validation.empty()) {
        best_acc = acc;
        best = mastery;
        have_best = true;
      }
    }
    return best;
  }

  double accuracy(const Corpus& corpus, const std::vector<double>& mastery) const {
    if (corpus.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& s : corpus) {
      if (auto t = find_tag(s.question)) {
        if (mastery_for(mastery, t->topic) >= t->difficulty) ++correct;
      }
    }
    return static_cast<double>(correct) / static_cast<double>(corpus.size());
  }

  double mastery_for(const std::vector<double>& mastery, int topic) const {
    if (topic < 0 || static_cast<std::size_t>(topic) >= mastery.size()) return 0.0;
    return mastery[static_cast<std::size_t>(topic)];
  }

 private:
  SimConfig config_;
};

inline std::vector<double> mastery_of(const StudentState* state, const SimWorld& world) {
  if (!state || !state->payload.contains("mastery")) return world.base_mastery();
  return state->payload.at("mastery").get<std::vector<double>>();
}

inline TokenUsage sim_usage(const ChatRequest& req, std::string_view text) {
  TokenUsage u;
  u.input_tokens = approx_token_count(req.joined_text());
  u.output_tokens = approx_token_count(text);
  return u;
}

// ---------------------------------------------------------------------------
// Game-of-24 support

inline double game24_difficulty(const std::vector<std::int64_t>& numbers) {
  std::vector<std::int64_t> sorted = numbers;
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t h = 0x24;
  for (auto n : sorted) h = detail::mix(h, static_cast<std::uint64_t>(n));
  return detail::unit_from_bits(detail::splitmix64(h));
}

// Replace one a*b factor pair with another pair of the same product.
inline std::optional<std::string> game24_backward_variant(std::string_view solution,
                                                          std::uint64_t seed) {
  static const std::regex kProduct(R"((\d+)\s*\*\s*(\d+))");
  const std::string s(solution);
  std::vector<std::smatch> matches;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kProduct); it != std::sregex_iterator();
       ++it) {
    matches.push_back(*it);
  }
  if (matches.empty()) return std::nullopt;
  detail::Rng rng(detail::derive_seed(seed, "backward24"));
  const auto& m = matches[rng.below(matches.size())];
  const std::int64_t a = std::stoll(m[1].str());
  const std::int64_t b = std::stoll(m[2].str());
  const std::int64_t product = a * b;
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
  for (std::int64_t d = 1; d * d <= product; ++d) {
    if (product % d != 0) continue;
    const std::int64_t e = product / d;
    if ((d == a && e == b) || (d == b && e == a)) continue;
    if (e > 100) continue;
    pairs.emplace_back(d, e);
  }
  if (pairs.empty()) return std::nullopt;
  const auto [d, e] = pairs[rng.below(pairs.size())];
  std::string out = s.substr(0, static_cast<std::size_t>(m.position(0)));
  out += std::to_string(d) + "*" + std::to_string(e);
  out += s.substr(static_cast<std::size_t>(m.position(0) + m.length(0)));
  return out;
}

// ---------------------------------------------------------------------------
// Backends

/// Simulated teacher: rewrites questions, answers them correctly, judges
/// answer pairs and verifies answers. Dispatch is by prompt shape.
class SimTeacherBackend : public ModelBackend {
 public:
  explicit SimTeacherBackend(SimWorld world) : world_(std::move(world)) {}

  ChatResponse chat(const ChatRequest& request, const StudentState*) override {
    const std::string prompt = request.joined_text();
    ChatResponse r;
    r.text = respond(prompt, request.seed.value_or(0));
    r.usage = sim_usage(request, r.text);
    if (request.want_logprobs) {
      std::vector<TokenLogprob> lps;
      for (auto& t : detail::split_whitespace(r.text)) lps.push_back({t, 0.0});
      r.token_logprobs = std::move(lps);
    }
    return r;
  }

  const SimWorld& world() const { return world_; }

 private:
  static std::string after_last(const std::string& text, std::string_view marker) {
    const auto pos = text.rfind(marker);
    if (pos == std::string::npos) return {};
    return text.substr(pos + marker.size());
  }

  static std::string between(const std::string& text, std::string_view open,
                             std::string_view close) {
    const auto a = text.find(open);
    if (a == std::string::npos) return {};
    const auto start = a + open.size();
    const auto b = text.find(close, start);
    return text.substr(start, b == std::string::npos ? std::string::npos : b - start);
  }

  std::string respond(const std::string& prompt, std::uint64_t seed) const {
    if (prompt.find("[The Start of Assistant 1's Answer]") != std::string::npos) {
      return judge(prompt);
    }
    if (prompt.find("Final Verdict") != std::string::npos) return verdict(prompt);
    if (prompt.find("backward thinking method") != std::string::npos) {
      return backward(prompt, seed);
    }
    if (prompt.find("Provide the steps to obtain the final answer") != std::string::npos) {
      const std::string answer = detail::replace_all(
          std::string(detail::trim(between(prompt, "Here is the final answer:", "\n"))), "\n", "");
      return "Working backwards from the target. Answer: " + answer + " = 24 \\boxed{" + answer +
             "}";
    }
    if (prompt.find("Put your final answer within \\boxed{answer}") != std::string::npos) {
      const auto numbers = verify::parse_integers(after_last(prompt, "Input:"));
      auto sol = verify::solve_24(numbers);
      return sol ? "Answer: " + *sol + " = 24 \\boxed{" + *sol + "}" : "\\boxed{null}";
    }
    const auto tag = find_tag(prompt);
    if (prompt.find("#Rewritten Instruction#") != std::string::npos) {
      if (!tag) return "A new question without structure ?";
      detail::Rng rng(detail::derive_seed(world_.config().seed, "child",
                                          {seed, detail::fnv1a64(prompt)}));
      Tag child = *tag;
      child.difficulty =
          std::clamp(tag->difficulty + world_.config().teacher_noise * rng.normal(), 0.0, 1.0);
      return "#Rewritten Instruction#: " + world_.make_question(child, rng.next_u64());
    }
    // Anything else is an answer prompt; answer the tagged question.
    std::string question = prompt;
    if (tag) {
      const std::string tagged = format_tag(*tag);
      const auto pos = prompt.rfind(tagged);
      const auto end = prompt.find(" ?", pos);
      question = prompt.substr(pos, end == std::string::npos ? std::string::npos : end + 2 - pos);
    }
    return world_.answer_text(question, true);
  }

  std::string judge(const std::string& prompt) const {
    const std::string question = between(prompt, "[Question]\n", "\n\n[The Start");
    const std::string student =
        between(prompt, "[The Start of Assistant 2's Answer]\n", "\n\n[The End of Assistant 2");
    const auto tag = find_tag(question);
    const double difficulty = tag ? tag->difficulty : 0.5;
    const auto boxed = verify::try_extract_boxed(student);
    const bool correct =
        boxed && *boxed == std::to_string(SimWorld::answer_value(detail::trim(question)));
    const int teacher_score = 9;
    const int student_score =
        correct ? 8 : std::clamp(static_cast<int>(std::lround(7.0 - 6.0 * difficulty)), 1, 10);
    return std::to_string(teacher_score) + " " + std::to_string(student_score) +
           "\nAssistant 1 reaches the expected result; Assistant 2 " +
           (correct ? "does as well." : "does not.");
  }

  std::string verdict(const std::string& prompt) const {
    const std::string truth = between(prompt, "Problem Setter\xE2\x80\x99s answer:", "Student");
    const std::string student = after_last(prompt, "Student\xE2\x80\x99s answer:");
    const auto a = verify::try_extract_boxed(truth);
    const auto b = verify::try_extract_boxed(student);
    const bool match = a && b && *a == *b;
    return std::string("Error Analysis: the final answers ") + (match ? "match" : "differ") +
           ". Final Verdict: " + (match ? "Correct" : "Incorrect");
  }

  std::string backward(const std::string& prompt, std::uint64_t seed) const {
    const std::string solution =
        std::string(detail::trim(between(prompt, "Here is the current solution ", " again.")));
    auto variant = game24_backward_variant(solution, seed);
    if (!variant) return "No valid substitution exists. \\boxed{null}";
    return "Substituting a new factor pair gives \\boxed{" + *variant + "}";
  }

  SimWorld world_;
};

/// Simulated student. Greedy answers are correct iff μ_topic ≥ δ.
class SimStudentBackend : public ModelBackend {
 public:
  explicit SimStudentBackend(SimWorld world) : world_(std::move(world)) {}

  ChatResponse chat(const ChatRequest& request, const StudentState* state) override {
    const std::string prompt = request.joined_text();
    const auto mastery = mastery_of(state, world_);
    ChatResponse r;
    if (prompt.find("Put your final answer within \\boxed{answer}") != std::string::npos) {
      const auto numbers = verify::parse_integers(
          prompt.substr(prompt.rfind("Input:") == std::string::npos ? 0 : prompt.rfind("Input:")));
      const double difficulty = game24_difficulty(numbers);
      auto sol = world_.mastery_for(mastery, 0) >= difficulty ? verify::solve_24(numbers)
                                                              : std::nullopt;
      r.text = sol ? "Answer: \\boxed{" + *sol + "}" : "\\boxed{0}";
    } else {
      const auto tag = find_tag(prompt);
      const std::string question = extract_question(prompt, tag);
      const bool correct = tag && world_.mastery_for(mastery, tag->topic) >= tag->difficulty;
      r.text = world_.answer_text(question, correct);
    }
    r.usage = sim_usage(request, r.text);
    if (request.want_logprobs) {
      r.token_logprobs = world_.logprobs(extract_question(prompt, find_tag(prompt)), r.text,
                                         world_.mastery_for(mastery, topic_of(prompt)));
    }
    return r;
  }

  std::vector<TokenLogprob> answer_logprobs(const ChatRequest& prompt, std::string_view answer,
                                            const StudentState* state) override {
    const std::string text = prompt.joined_text();
    const auto mastery = mastery_of(state, world_);
    return world_.logprobs(extract_question(text, find_tag(text)), answer,
                           world_.mastery_for(mastery, topic_of(text)));
  }

  GradientFeatures grad_features(const ChatRequest& prompt, std::string_view answer,
                                 const StudentState* state) override {
    const std::string text = prompt.joined_text();
    const auto mastery = mastery_of(state, world_);
    return world_.grad_features(extract_question(text, find_tag(text)), answer,
                                world_.mastery_for(mastery, topic_of(text)));
  }

  StudentState finetune(const Corpus& train, const Corpus& validation,
                        const FinetuneHyperparams& hp, std::string_view,
                        std::uint64_t seed) override {
    StudentState s;
    s.payload["mastery"] = world_.train(train, validation, hp.epochs);
    std::uint64_t h = detail::mix(seed, static_cast<std::uint64_t>(hp.epochs));
    for (const auto& sample : train) h = detail::mix(h, detail::fnv1a64(sample.id));
    s.id = "sim-" + detail::hex64(h);
    return s;
  }

  StudentState base_state() override {
    StudentState s;
    s.payload["mastery"] = world_.base_mastery();
    return s;
  }

  const SimWorld& world() const { return world_; }

 private:
  static int topic_of(const std::string& prompt) {
    auto tag = find_tag(prompt);
    return tag ? tag->topic : 0;
  }

  // The tagged question inside a rendered prompt: from the tag to " ?".
  static std::string extract_question(const std::string& prompt, const std::optional<Tag>& tag) {
    if (!tag) return prompt;
    const auto pos = prompt.rfind(format_tag(*tag));
    const auto end = prompt.find(" ?", pos);
    return prompt.substr(pos, end == std::string::npos ? std::string::npos : end + 2 - pos);
  }

  SimWorld world_;
};

/// Simulated reward model: r = −δ + noise.
class SimRewardBackend : public ModelBackend {
 public:
  explicit SimRewardBackend(SimWorld world) : world_(std::move(world)) {}

  ChatResponse chat(const ChatRequest&, const StudentState*) override {
    throw UnsupportedCapabilityError("simulated reward model does not chat");
  }

  double reward(std::string_view question, std::string_view answer) override {
    return world_.reward(question, answer);
  }

 private:
  SimWorld world_;
};

// ---------------------------------------------------------------------------
// Corpora

/// n tagged samples with topics uniform and difficulty uniform in [0, 1].
inline Corpus make_sim_corpus(const SimWorld& world, CorpusRole role, std::size_t n,
                              std::string_view id_prefix, std::uint64_t seed) {
  detail::Rng rng(detail::derive_seed(seed, "sim_corpus", {detail::fnv1a64(id_prefix)}));
  std::vector<Sample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tag tag;
    tag.topic = static_cast<int>(rng.below(static_cast<std::uint64_t>(world.config().topics)));
    tag.difficulty = std::round(rng.uniform() * 1e4) / 1e4;
    const std::string question = world.make_question(tag, rng.next_u64());
    char id[64];
    std::snprintf(id, sizeof id, "%.*s-%05zu", static_cast<int>(id_prefix.size()),
                  id_prefix.data(), i);
    samples.push_back(Sample::seed(id, question, world.answer_text(question, true),
                                   {{"topic", std::to_string(tag.topic)}}));
  }
  return Corpus(role, std::move(samples));
}

}  // namespace itersynth::modelio::sim
