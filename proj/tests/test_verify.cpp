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

#include <gtest/gtest.h>

#include <numeric>
#include <optional>
#include <random>

#include "oracles.hpp"
#include "support.hpp"

using namespace itersynth;
using namespace itersynth::verify;
using namespace itersynth::oracles;

TEST(ExtractBoxed, Examples) {
  EXPECT_EQ(extract_boxed("so \\boxed{42}."), "42");
  EXPECT_EQ(extract_boxed("\\boxed{\\frac{1}{2}}"), "\\frac{1}{2}");
  EXPECT_THROW(extract_boxed("no box here"), ExtractionError);
}

TEST(ExtractBoxed, LastBoxWins) {
  EXPECT_EQ(extract_boxed("first \\boxed{1} then \\boxed{ 2 }"), "2");
  // An unbalanced trailing box falls back to the previous complete one.
  EXPECT_EQ(extract_boxed("\\boxed{7} and \\boxed{oops"), "7");
}

TEST(ExtractBoxed, AppendedBalancedAnswerIsRecovered) {
  const std::vector<std::string> bodies = {"A", "x^{2}", "\\frac{a}{b}", "{}", "1,2"};
  const std::vector<std::string> prefixes = {"", "text \\boxed{9} ", "{ { ", "\\boxed{"};
  for (const auto& p : prefixes) {
    for (const auto& b : bodies) {
      EXPECT_EQ(extract_boxed(p + "\\boxed{" + b + "}"), b) << p << " | " << b;
    }
  }
}

TEST(ReferenceAnswer, Formats) {
  EXPECT_EQ(reference_final_answer("steps #### 72"), "72");
  EXPECT_EQ(reference_final_answer("\\boxed{5}"), "5");
  EXPECT_EQ(reference_final_answer(" 9 "), "9");
}

TEST(Verify24, WorkedExamples) {
  EXPECT_TRUE(verify_24({4, 4, 6, 8}, "(6 - 4) * (4 + 8)"));
  EXPECT_TRUE(verify_24({8, 8, 10, 13}, "13*8-10*8"));
  EXPECT_FALSE(verify_24({4, 4, 6, 8}, "4*6"));
}

TEST(Verify24, ExactRationalArithmetic) {
  EXPECT_TRUE(verify_24({3, 3, 8, 8}, "8/(3-8/3)"));
  EXPECT_TRUE(verify_24({1, 5, 5, 5}, "5*(5-1/5)"));
}

TEST(Verify24, NotationVariants) {
  EXPECT_TRUE(verify_24({4, 4, 6, 8}, "(6 − 4) × (4 + 8)"));
  EXPECT_TRUE(verify_24({4, 4, 6, 8}, "\\left(6-4\\right) \\times (4+8)"));
  EXPECT_TRUE(verify_24({8, 8, 10, 13}, "13 \\cdot 8 - 10 \\cdot 8 = 24"));
  EXPECT_FALSE(verify_24({8, 8, 10, 13}, "13*8-10*8 = 25"));
}

TEST(Verify24, Diagnostics) {
  EXPECT_EQ(check_24({1, 2, 3, 4}, "(1+2)*2*4").detail, "numbers not used exactly once");
  EXPECT_EQ(check_24({1, 1, 3, 4}, "4/(1-1)*3").detail, "division by zero");
  EXPECT_NE(check_24({1, 2, 3, 4}, "1+2+3+4").detail.find("evaluates to 10"),
            std::string::npos);
  EXPECT_NE(check_24({1, 2, 3, 4}, "1+*2").detail.find("parse failure"),
            std::string::npos);
}


TEST(Verify24, AgreesWithEnumeratorOnRandomQuadruples) {
  std::mt19937 gen(2024);
  std::uniform_int_distribution<int> digit(1, 13);
  int false_rejects = 0, false_accepts = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<long long> nums(4);
    for (auto& x : nums) x = digit(gen);
    const auto exprs = enumerate(nums);
    bool any = false;
    std::vector<std::int64_t> ints(nums.begin(), nums.end());
    std::size_t checked = 0;
    for (std::size_t i = 0; i < exprs.size(); ++i) {
      const auto& e = exprs[i];
      const bool valid = e.value && e.value->n == 24 && e.value->d == 1;
      any = any || valid;
      // Every valid expression plus a sample of invalid ones.
      if (!valid && i % 37 != 0) continue;
      ++checked;
      const bool got = verify_24(ints, e.text);
      if (valid && !got) ++false_rejects;
      if (!valid && got) ++false_accepts;
    }
    EXPECT_GT(checked, 0u);
    const auto sol = solve_24(ints);
    EXPECT_EQ(sol.has_value(), any) << nums[0] << " " << nums[1] << " " << nums[2] << " " << nums[3];
    if (sol) {
      EXPECT_TRUE(verify_24(ints, *sol));
    }
  }
  EXPECT_EQ(false_rejects, 0);
  EXPECT_EQ(false_accepts, 0);
}

TEST(FinalVerdict, Parsing) {
  EXPECT_TRUE(parse_final_verdict("Error Analysis: fine.\nFinal Verdict: Correct").correct);
  EXPECT_FALSE(parse_final_verdict("... Final Verdict: Incorrect").correct);
  const auto none = parse_final_verdict("The answer seems fine.");
  EXPECT_FALSE(none.correct);
  EXPECT_EQ(none.detail.value_or(""), "no verdict");
  EXPECT_TRUE(parse_final_verdict("**Final Verdict:** *correct*").correct);
  const auto both = parse_final_verdict("Final Verdict: Correct. Final Verdict: Incorrect");
  EXPECT_FALSE(both.correct);
  EXPECT_EQ(both.detail.value_or(""), "ambiguous verdict");
}

TEST(LlmJudge, UsesJudgeEndpointAtTemperatureZero) {
  auto backend = std::make_shared<fixtures::ScriptedBackend>(
      [](const modelio::ChatRequest&, int) { return std::string("Final Verdict: Correct"); });
  auto judge = fixtures::teacher_endpoint(backend);
  EXPECT_TRUE(llm_judge_verify(*judge, "q", "\\boxed{1}", "\\boxed{1}", DatasetKind::kGsm8kStyle).correct);
  ASSERT_EQ(backend->requests.size(), 1u);
  EXPECT_EQ(backend->requests[0].temperature, 0.0);
  EXPECT_EQ(backend->requests[0].messages.front().role, "system");
  EXPECT_THROW(render_eval_request(DatasetKind::kGame24Backward, "q", "a", "b"), ValidationError);
}

TEST(Accuracy, BinomialExamples) {
  const Corpus test(CorpusRole::kTest, {Sample::seed("a", "q1", "\\boxed{1}"), Sample::seed("b", "q2", "\\boxed{2}")});
  const auto v = boxed_match_verifier();
  auto all = eval_accuracy(test, {{"a", "\\boxed{1}"}, {"b", "\\boxed{2}"}}, v);
  EXPECT_DOUBLE_EQ(all.mean, 1.0);
  EXPECT_DOUBLE_EQ(all.standard_error, 0.0);
  auto half = eval_accuracy(test, {{"a", "\\boxed{1}"}, {"b", "\\boxed{3}"}}, v);
  EXPECT_DOUBLE_EQ(half.mean, 0.5);
  EXPECT_NEAR(half.standard_error, 0.3536, 1e-4);
  EXPECT_THROW(eval_accuracy(Corpus(CorpusRole::kTest, {}), {}, v), ValidationError);
  EXPECT_THROW(eval_accuracy(test, {{"a", "x"}}, v), ValidationError);
}

TEST(Accuracy, RangeAndZeroSeProperty) {
  for (std::size_t n = 1; n <= 30; ++n) {
    for (std::size_t k = 0; k <= n; ++k) {
      const auto [p, se] = binomial_mean_se(k, n);
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
      EXPECT_EQ(se == 0.0, k == 0 || k == n);
    }
  }
}

TEST(Verifiers, Game24AcceptsAlternativeSolution) {
  Sample s = Sample::seed("g", "Input: 4 4 6 8", "(6 - 4) * (4 + 8) = 24 \\boxed{(6 - 4) * (4 + 8)}",
                          {{"numbers", "4 4 6 8"}});
  const auto v = arithmetic_24_verifier();
  EXPECT_TRUE(v(s, "\\boxed{(8 - 6 + 4) * 4}").correct);
  EXPECT_TRUE(v(s, "\\boxed{(4 + 8) * (6 - 4)}").correct);
  EXPECT_FALSE(v(s, "\\boxed{(8 - 4) * 6 * 4 / 4}").correct);  // three 4s
  EXPECT_FALSE(v(s, "\\boxed{4 * 6}").correct);
  EXPECT_FALSE(v(s, "no box").correct);
}

TEST(Verifiers, BoxedMatch) {
  const auto v = boxed_match_verifier();
  const auto s = Sample::seed("a", "q", "work #### 24");
  EXPECT_TRUE(v(s, "so \\boxed{24}").correct);
  EXPECT_FALSE(v(s, "so \\boxed{23}").correct);
}
