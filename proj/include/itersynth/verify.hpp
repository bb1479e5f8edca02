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
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "itersynth/corpus.hpp"
#include "itersynth/dataset.hpp"
#include "itersynth/detail/text.hpp"
#include "itersynth/error.hpp"
#include "itersynth/modelio/endpoint.hpp"
#include "itersynth/prompts.hpp"

namespace itersynth::verify {

using Rational = boost::multiprecision::cpp_rational;

enum class VerdictMethod { kBoxedMatch, kArithmetic24, kLlmJudge };

inline std::string_view to_string(VerdictMethod m) {
  switch (m) {
    case VerdictMethod::kBoxedMatch: return "boxed_match";
    case VerdictMethod::kArithmetic24: return "arithmetic_24";
    case VerdictMethod::kLlmJudge: return "llm_judge";
  }
  return "boxed_match";
}

struct Verdict {
  std::string sample_id;
  bool correct = false;
  VerdictMethod method = VerdictMethod::kBoxedMatch;
  std::optional<std::string> detail;
};

// ---------------------------------------------------------------------------
// Boxed-answer extraction

/// Content of the last \boxed{...} span, brace-balanced and trimmed.
inline std::string extract_boxed(std::string_view text) {
  static constexpr std::string_view kMarker = "\\boxed{";
  std::size_t search_end = text.size();
  while (true) {
    const std::size_t start = text.rfind(kMarker, search_end);
    if (start == std::string_view::npos) break;
    int depth = 1;
    std::size_t i = start + kMarker.size();
    for (; i < text.size(); ++i) {
      if (text[i] == '{') {
        ++depth;
      } else if (text[i] == '}') {
        if (--depth == 0) break;
      }
    }
    if (depth == 0) {
      const std::size_t begin = start + kMarker.size();
      return std::string(detail::trim(text.substr(begin, i - begin)));
    }
    // Unbalanced trailing box; fall back to the one before it.
    if (start == 0) break;
    search_end = start - 1;
  }
  throw ExtractionError("no \\boxed{...} span found");
}

inline std::optional<std::string> try_extract_boxed(std::string_view text) {
  try {
    return extract_boxed(text);
  } catch (const ExtractionError&) {
    return std::nullopt;
  }
}

// Reference answers may be boxed, GSM8k-style "#### 42", or bare.
inline std::string reference_final_answer(std::string_view ground_truth) {
  if (auto boxed = try_extract_boxed(ground_truth)) return *boxed;
  const std::size_t hashes = ground_truth.rfind("####");
  if (hashes != std::string_view::npos) {
    return std::string(detail::trim(ground_truth.substr(hashes + 4)));
  }
  return std::string(detail::trim(ground_truth));
}

// ---------------------------------------------------------------------------
// Exact arithmetic for Game of 24

struct ParsedExpression {
  Rational value;
  std::vector<std::int64_t> literals;
};

namespace detail_expr {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  ParsedExpression parse() {
    ParsedExpression out;
    out.value = expr(out.literals);
    skip_space();
    if (pos_ != text_.size()) {
      throw ParseError("unexpected '" + std::string(text_.substr(pos_, 1)) +
                       "' at offset " + std::to_string(pos_));
    }
    return out;
  }

 private:
  enum class Op { kNone, kAdd, kSub, kMul, kDiv };

  void skip_space() {
    while (pos_ < text_.size() && itersynth::detail::is_space(text_[pos_])) ++pos_;
  }

  bool consume(std::string_view token) {
    if (text_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  Op peek_additive() {
    skip_space();
    if (consume("+")) return Op::kAdd;
    if (consume("-") || consume("\xE2\x88\x92")) return Op::kSub;
    return Op::kNone;
  }

  Op peek_multiplicative() {
    skip_space();
    if (consume("*") || consume("\xC3\x97") || consume("\\times") ||
        consume("\\cdot")) {
      return Op::kMul;
    }
    if (consume("/") || consume("\xC3\xB7") || consume("\\div")) return Op::kDiv;
    return Op::kNone;
  }

  Rational expr(std::vector<std::int64_t>& lits) {
    Rational acc = term(lits);
    for (Op op = peek_additive(); op != Op::kNone; op = peek_additive()) {
      Rational rhs = term(lits);
      if (op == Op::kAdd) {
        acc += rhs;
      } else {
        acc -= rhs;
      }
    }
    return acc;
  }

  Rational term(std::vector<std::int64_t>& lits) {
    Rational acc = factor(lits);
    for (Op op = peek_multiplicative(); op != Op::kNone; op = peek_multiplicative()) {
      Rational rhs = factor(lits);
      if (op == Op::kMul) {
        acc *= rhs;
      } else {
        if (rhs == 0) throw DegenerateInputError("division by zero");
        acc /= rhs;
      }
    }
    return acc;
  }

  Rational factor(std::vector<std::int64_t>& lits) {
    skip_space();
    if (consume("(") || consume("\\left(")) {
      Rational v = expr(lits);
      skip_space();
      if (!consume(")") && !consume("\\right)")) {
        throw ParseError("missing ')' at offset " + std::to_string(pos_));
      }
      return v;
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] >= '0' && text_[pos_] <= '9') ++pos_;
    if (pos_ == start) {
      throw ParseError("expected a number at offset " + std::to_string(start));
    }
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (ec != std::errc()) throw ParseError("integer literal out of range");
    lits.push_back(value);
    return Rational(value);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail_expr

/// Parses and evaluates an integer arithmetic expression exactly.
/// Throws ParseError or DegenerateInputError (division by zero).
inline ParsedExpression evaluate_expression(std::string_view text) {
  return detail_expr::Parser(text).parse();
}

/// All non-negative integer literals in `text`, in order of appearance.
inline std::vector<std::int64_t> parse_integers(std::string_view text) {
  std::vector<std::int64_t> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] >= '0' && text[i] <= '9') {
      std::size_t j = i;
      while (j < text.size() && text[j] >= '0' && text[j] <= '9') ++j;
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + j, v);
      if (ec == std::errc()) out.push_back(v);
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

struct Check24 {
  bool ok = false;
  std::string detail;
};

/// True iff `expression` evaluates exactly to 24 and its integer literals are
/// the multiset `numbers`. A trailing "= 24" is tolerated.
inline Check24 check_24(std::vector<std::int64_t> numbers, std::string_view expression) {
  std::string_view lhs = expression;
  if (const auto eq = expression.find('='); eq != std::string_view::npos) {
    lhs = expression.substr(0, eq);
    try {
      const auto rhs = evaluate_expression(expression.substr(eq + 1));
      if (rhs.value != 24) return {false, "right-hand side is not 24"};
    } catch (const Error& e) {
      return {false, std::string("right-hand side: ") + e.what()};
    }
  }
  ParsedExpression parsed;
  try {
    parsed = evaluate_expression(lhs);
  } catch (const DegenerateInputError& e) {
    return {false, e.what()};
  } catch (const ParseError& e) {
    return {false, std::string("parse failure: ") + e.what()};
  }
  std::sort(numbers.begin(), numbers.end());
  std::sort(parsed.literals.begin(), parsed.literals.end());
  if (parsed.literals != numbers) return {false, "numbers not used exactly once"};
  if (parsed.value != 24) {
    return {false, "evaluates to " + parsed.value.str() + ", not 24"};
  }
  return {true, ""};
}

inline bool verify_24(const std::vector<std::int64_t>& numbers,
                      std::string_view expression) {
  return check_24(numbers, expression).ok;
}

/// Depth-first search over pairwise combinations; returns an expression
/// reaching 24 or nullopt. Deterministic for a given input order.
inline std::optional<std::string> solve_24(const std::vector<std::int64_t>& numbers) {
  struct Item {
    Rational value;
    std::string text;
    bool atomic;
  };
  std::function<std::optional<std::string>(std::vector<Item>)> search =
      [&](std::vector<Item> items) -> std::optional<std::string> {
    if (items.size() == 1) {
      if (items[0].value == 24) return items[0].text;
      return std::nullopt;
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
      for (std::size_t j = 0; j < items.size(); ++j) {
        if (i == j) continue;
        std::vector<Item> rest;
        for (std::size_t k = 0; k < items.size(); ++k) {
          if (k != i && k != j) rest.push_back(items[k]);
        }
        const Item& a = items[i];
        const Item& b = items[j];
        auto wrap = [](const Item& it) {
          return it.atomic ? it.text : "(" + it.text + ")";
        };
        std::vector<Item> candidates;
        if (i < j) {
          candidates.push_back({a.value + b.value, wrap(a) + " + " + wrap(b), false});
          candidates.push_back({a.value * b.value, wrap(a) + " * " + wrap(b), false});
        }
        candidates.push_back({a.value - b.value, wrap(a) + " - " + wrap(b), false});
        if (b.value != 0) {
          candidates.push_back({a.value / b.value, wrap(a) + " / " + wrap(b), false});
        }
        for (auto& c : candidates) {
          auto next = rest;
          next.push_back(std::move(c));
          if (auto found = search(std::move(next))) return found;
        }
      }
    }
    return std::nullopt;
  };
  std::vector<Item> items;
  for (auto n : numbers) items.push_back({Rational(n), std::to_string(n), true});
  if (items.empty()) return std::nullopt;
  return search(std::move(items));
}

// ---------------------------------------------------------------------------
// Judge-based verification

struct ParsedVerdict {
  bool correct = false;
  std::optional<std::string> detail;
};

/// Looks for "Final Verdict: Correct" / "Final Verdict: Incorrect" ignoring
/// case and markdown markup. Ambiguous or missing verdicts count as wrong.
inline ParsedVerdict parse_final_verdict(std::string_view completion) {
  std::string cleaned;
  cleaned.reserve(completion.size());
  for (char c : completion) {
    if (c == '*' || c == '_' || c == '#' || c == '`') continue;
    cleaned.push_back(c);
  }
  cleaned = itersynth::detail::to_lower_ascii(cleaned);
  static const std::regex kVerdict(R"(final\s+verdict\s*[:\-]?\s*(in)?correct)");
  bool saw_correct = false;
  bool saw_incorrect = false;
  for (auto it = std::sregex_iterator(cleaned.begin(), cleaned.end(), kVerdict);
       it != std::sregex_iterator(); ++it) {
    if ((*it)[1].matched) {
      saw_incorrect = true;
    } else {
      saw_correct = true;
    }
  }
  if (saw_correct && saw_incorrect) return {false, "ambiguous verdict"};
  if (saw_correct) return {true, std::nullopt};
  if (saw_incorrect) return {false, std::nullopt};
  return {false, "no verdict"};
}

inline modelio::ChatRequest render_eval_request(DatasetKind kind,
                                                std::string_view question,
                                                std::string_view ground_truth,
                                                std::string_view student_answer,
                                                const std::filesystem::path& template_dir = {}) {
  std::string system_asset;
  if (kind == DatasetKind::kGsm8kStyle) {
    system_asset = "eval_system_gsm8k";
  } else if (kind == DatasetKind::kProntoStyle) {
    system_asset = "eval_system_pronto";
  } else {
    throw ValidationError("judge verification is only defined for gsm8k_style "
                          "and pronto_style datasets");
  }
  modelio::ChatRequest req;
  req.messages.push_back({"system", load_asset(system_asset, template_dir)});
  req.messages.push_back(
      {"user", render_template(load_asset("eval_user", template_dir),
                               {{"question", std::string(question)},
                                {"ground_truth", std::string(ground_truth)},
                                {"student_answer", std::string(student_answer)}})});
  req.temperature = 0.0;
  req.seed = 0;
  return req;
}

/// Asks the judge model whether the student's answer matches the reference.
/// One retry on transient transport failure on top of the endpoint policy.
inline ParsedVerdict llm_judge_verify(const modelio::ModelEndpoint& judge,
                                      std::string_view question,
                                      std::string_view ground_truth,
                                      std::string_view student_answer,
                                      DatasetKind kind,
                                      const std::filesystem::path& template_dir = {}) {
  const auto req = render_eval_request(kind, question, ground_truth,
                                       student_answer, template_dir);
  const auto resp = modelio::chat(judge, req, nullptr, "judge_verify");
  return parse_final_verdict(resp.text);
}

// ---------------------------------------------------------------------------
// Verifiers and accuracy

using Verifier = std::function<Verdict(const Sample& sample, std::string_view prediction)>;

/// String equality of the last boxed answer against the reference.
inline Verifier boxed_match_verifier() {
  return [](const Sample& sample, std::string_view prediction) {
    Verdict v{sample.id, false, VerdictMethod::kBoxedMatch, std::nullopt};
    auto predicted = try_extract_boxed(prediction);
    if (!predicted) {
      v.detail = "no boxed answer";
      return v;
    }
    const std::string reference = reference_final_answer(sample.answer);
    v.correct = *predicted == reference;
    if (!v.correct) v.detail = "expected '" + reference + "', got '" + *predicted + "'";
    return v;
  };
}

/// Game of 24: the boxed expression must reach 24 using exactly the
/// question's numbers. Any valid solution counts, not just the reference.
inline Verifier arithmetic_24_verifier() {
  return [](const Sample& sample, std::string_view prediction) {
    Verdict v{sample.id, false, VerdictMethod::kArithmetic24, std::nullopt};
    auto expr = try_extract_boxed(prediction);
    if (!expr) {
      v.detail = "no boxed answer";
      return v;
    }
    std::vector<std::int64_t> numbers;
    if (auto it = sample.meta.find("numbers"); it != sample.meta.end()) {
      numbers = parse_integers(it->second);
    } else {
      numbers = parse_integers(sample.question);
    }
    const auto check = check_24(numbers, *expr);
    v.correct = check.ok;
    if (!check.ok) v.detail = check.detail;
    return v;
  };
}

inline Verifier llm_judge_verifier(const modelio::ModelEndpoint& judge, DatasetKind kind,
                                   std::filesystem::path template_dir = {}) {
  return [&judge, kind, template_dir](const Sample& sample, std::string_view prediction) {
    const auto parsed = llm_judge_verify(judge, sample.question, sample.answer,
                                         prediction, kind, template_dir);
    return Verdict{sample.id, parsed.correct, VerdictMethod::kLlmJudge, parsed.detail};
  };
}

struct AccuracyResult {
  double mean = 0.0;
  double standard_error = 0.0;
  std::vector<Verdict> verdicts;
};

inline std::pair<double, double> binomial_mean_se(std::size_t correct, std::size_t n) {
  const double p = static_cast<double>(correct) / static_cast<double>(n);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n))};
}

/// Fraction correct with binomial standard error √(p(1−p)/n).
inline AccuracyResult eval_accuracy(const Corpus& test,
                                    const std::map<std::string, std::string>& predictions,
                                    const Verifier& verifier) {
  if (test.empty()) throw ValidationError("cannot evaluate on an empty corpus");
  AccuracyResult out;
  out.verdicts.reserve(test.size());
  std::size_t correct = 0;
  for (const auto& s : test) {
    auto it = predictions.find(s.id);
    if (it == predictions.end()) {
      throw ValidationError("missing prediction for sample '" + s.id + "'");
    }
    out.verdicts.push_back(verifier(s, it->second));
    if (out.verdicts.back().correct) ++correct;
  }
  std::tie(out.mean, out.standard_error) = binomial_mean_se(correct, test.size());
  return out;
}

inline nlohmann::ordered_json to_json(const Verdict& v) {
  nlohmann::ordered_json j;
  j["sample_id"] = v.sample_id;
  j["correct"] = v.correct;
  j["method"] = std::string(to_string(v.method));
  j["detail"] = v.detail ? nlohmann::ordered_json(*v.detail) : nlohmann::ordered_json(nullptr);
  return j;
}

}  // namespace itersynth::verify
