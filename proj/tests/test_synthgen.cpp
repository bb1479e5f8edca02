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

#include <functional>
#include <random>

#include "oracles.hpp"
#include "support.hpp"

using namespace itersynth;
using namespace itersynth::synthgen;
using namespace itersynth::oracles;

namespace {

Corpus gsm_seed(std::size_t n = 8) {
  std::vector<Sample> s;
  for (std::size_t i = 0; i < n; ++i) {
    s.push_back(Sample::seed("g" + std::to_string(i),
                             "Question number " + std::to_string(i) + " about apples?",
                             "Answer \\boxed{" + std::to_string(i) + "}"));
  }
  return Corpus(CorpusRole::kSeed, std::move(s));
}

std::string words(std::size_t from, std::size_t to, const std::string& prefix = "w") {
  std::string out;
  for (std::size_t i = from; i < to; ++i) out += prefix + std::to_string(i) + " ";
  return out;
}

}  // namespace

TEST(Rouge, Examples) {
  EXPECT_DOUBLE_EQ(rouge_l("a b c d e", "a b c d f"), 0.8);
  EXPECT_DOUBLE_EQ(rouge_l("The Cat sat", "the cat SAT"), 1.0);
  EXPECT_EQ(rouge_l("", ""), 1.0);
  EXPECT_EQ(rouge_l("x", ""), 0.0);
  EXPECT_EQ(rouge_l("a b", "c d"), 0.0);
}

TEST(Rouge, MatchesRecursiveLcsOracle) {
  std::mt19937 gen(8);
  const std::vector<std::string> vocab{"a", "b", "c", "d"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> a(1 + gen() % 8), b(1 + gen() % 8);
    for (auto& t : a) t = vocab[gen() % vocab.size()];
    for (auto& t : b) t = vocab[gen() % vocab.size()];
    const double expected = 2.0 * static_cast<double>(lcs(a, b)) / static_cast<double>(a.size() + b.size());
    EXPECT_NEAR(rouge_l_tokens(a, b), expected, 1e-12);
    EXPECT_NEAR(rouge_l_tokens(a, b), rouge_l_tokens(b, a), 1e-12);
    EXPECT_EQ(rouge_l_tokens(a, a), 1.0);
  }
}

TEST(Dedup, ThresholdBoundary) {
  // 100 tokens each; sharing 70 in order gives F1 = 0.70, 69 gives 0.69.
  const std::string base = words(0, 100);
  const std::string at70 = words(0, 70) + words(0, 30, "x");
  const std::string at69 = words(0, 69) + words(0, 31, "x");
  EXPECT_DOUBLE_EQ(rouge_l(base, at70), 0.70);
  EXPECT_DOUBLE_EQ(rouge_l(base, at69), 0.69);
  EXPECT_FALSE(dedup_filter(at70, {base}));
  EXPECT_TRUE(dedup_filter(at69, {base}));
  DedupHistory h;
  h.add(base);
  EXPECT_FALSE(h.accepts(at70));
  EXPECT_TRUE(h.accepts(at69));
  EXPECT_TRUE(dedup_filter("anything", {}));
  EXPECT_THROW(DedupHistory(0.0), ValidationError);
  EXPECT_THROW(dedup_filter("a", {}, 1.5), ValidationError);
}

TEST(Prompts, FewShotBlockOnlyWhenExamplesGiven) {
  const auto t = PromptTemplate::builtin(DatasetKind::kGsm8kStyle);
  const auto seed = gsm_seed();
  const auto bare = render_question_prompt(t, {}, seed[0]).joined_text();
  EXPECT_EQ(bare.find("#Examples#"), std::string::npos);
  EXPECT_NE(bare.find(seed[0].question), std::string::npos);
  const auto shots = std::vector<Sample>{seed[1], seed[2]};
  const auto with = render_question_prompt(t, shots, seed[0]).joined_text();
  EXPECT_NE(with.find("#Examples#"), std::string::npos);
  EXPECT_NE(with.find(seed[1].question), std::string::npos);
  EXPECT_NE(with.find(seed[2].question), std::string::npos);
  EXPECT_EQ(with.find("{{"), std::string::npos);
}

TEST(Prompts, FewShotDrawExcludesExemplarAndIsSeeded) {
  auto t = PromptTemplate::builtin(DatasetKind::kGsm8kStyle);
  t.few_shot_k = 3;
  const auto seed = gsm_seed();
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto shots = draw_few_shot(seed, seed[4], t, s);
    ASSERT_EQ(shots.size(), 3u);
    std::set<std::string> ids;
    for (const auto& x : shots) {
      EXPECT_NE(x.id, "g4");
      ids.insert(x.id);
    }
    EXPECT_EQ(ids.size(), 3u);
    EXPECT_EQ(shots, draw_few_shot(seed, seed[4], t, s));
  }
  t.few_shot_k = 50;
  EXPECT_EQ(draw_few_shot(seed, seed[0], t, 1).size(), 7u);
}

TEST(Prompts, MathDrawsStayInCategory) {
  auto t = PromptTemplate::builtin(DatasetKind::kMathCategoryStyle, {}, 2);
  std::vector<Sample> s;
  for (int i = 0; i < 6; ++i) {
    s.push_back(Sample::seed("m" + std::to_string(i), "q" + std::to_string(i), "\\boxed{1}",
                             {{"category", i % 2 ? "algebra" : "geometry"}}));
  }
  Corpus seed(CorpusRole::kSeed, s);
  const auto shots = draw_few_shot(seed, seed[1], t, 5);
  ASSERT_EQ(shots.size(), 2u);
  for (const auto& x : shots) EXPECT_EQ(x.meta.at("category"), "algebra");
  const auto prompt = render_question_prompt(t, shots, seed[1]).joined_text();
  EXPECT_NE(prompt.find("algebra"), std::string::npos);
  EXPECT_THROW(render_question_prompt(t, {seed[0]}, seed[1]), ValidationError);
}

TEST(Synthesize, PairCallsTeacherTwice) {
  auto backend = std::make_shared<fixtures::ScriptedBackend>([](const modelio::ChatRequest&, int call) {
    return call == 0 ? std::string("#Rewritten Instruction#: How many pears?") : std::string("It is \\boxed{7}");
  });
  auto teacher = fixtures::teacher_endpoint(backend);
  const auto seed = gsm_seed();
  const auto t = PromptTemplate::builtin(DatasetKind::kGsm8kStyle);
  const auto o = synthesize_pair(*teacher, t, {}, seed[0], 3);
  EXPECT_TRUE(o.accepted);
  EXPECT_EQ(o.question, "How many pears?");
  EXPECT_EQ(o.answer, "It is \\boxed{7}");
  ASSERT_EQ(backend->requests.size(), 2u);
  EXPECT_NE(backend->requests[1].joined_text().find("How many pears?"), std::string::npos);
  EXPECT_EQ(teacher->ledger().totals(modelio::ModelRole::kTeacher).total(), 30);
}

TEST(Synthesize, TransportErrorBecomesTeacherError) {
  struct Failing : modelio::ModelBackend {
    modelio::ChatResponse chat(const modelio::ChatRequest&, const modelio::StudentState*) override {
      throw TransportError("connection refused", false);
    }
  };
  auto teacher = fixtures::teacher_endpoint(std::make_shared<Failing>());
  const auto seed = gsm_seed();
  const auto o = synthesize_pair(*teacher, PromptTemplate::builtin(DatasetKind::kGsm8kStyle), {}, seed[0], 1);
  EXPECT_FALSE(o.accepted);
  EXPECT_EQ(o.reject_reason, RejectReason::kTeacherError);
}

namespace {

Corpus game24_seed() {
  return Corpus(CorpusRole::kSeed,
                {Sample::seed("p0", "4 4 6 8", "Steps...\nAnswer: (6-4)*(4+8)", {{"numbers", "4 4 6 8"}})});
}

}  // namespace

TEST(Backward24, AcceptsVerifiedRewrite) {
  auto backend = std::make_shared<fixtures::ScriptedBackend>([](const modelio::ChatRequest&, int call) {
    return call == 0 ? std::string("New one: \\boxed{(13-10)*8*1}") : std::string("13-10=3, 3*8=24, 24*1=24");
  });
  auto teacher = fixtures::teacher_endpoint(backend);
  const auto seed = game24_seed();
  const auto t = PromptTemplate::builtin(DatasetKind::kGame24Backward);
  const auto o = backward_24_generate(*teacher, t, seed[0], 1);
  ASSERT_TRUE(o.accepted) << o.detail.value_or("");
  EXPECT_EQ(o.question, "1 8 10 13");
  EXPECT_TRUE(verify::verify_24({1, 8, 10, 13}, verify::extract_boxed(o.answer)));
  EXPECT_NE(backend->requests[0].joined_text().find("4 4 6 8"), std::string::npos);
}

TEST(Backward24, RejectsWrongNullAndUnboxed) {
  const auto seed = game24_seed();
  const auto t = PromptTemplate::builtin(DatasetKind::kGame24Backward);
  for (const std::string reply : {"\\boxed{1+2+3+4}", "\\boxed{null}", "no idea", "\\boxed{(6-4)*12}"}) {
    auto backend = std::make_shared<fixtures::ScriptedBackend>(
        [&](const modelio::ChatRequest&, int) { return reply; });
    auto teacher = fixtures::teacher_endpoint(backend);
    const auto o = backward_24_generate(*teacher, t, seed[0], 1);
    EXPECT_FALSE(o.accepted) << reply;
    EXPECT_EQ(o.reject_reason, RejectReason::kVerifierFailed) << reply;
    EXPECT_EQ(backend->requests.size(), 1u);
  }
}

TEST(Backward24, InvalidExemplarIsAnError) {
  Corpus bad(CorpusRole::kSeed, {Sample::seed("p", "1 1 1 1", "Answer: 1+1+1+1")});
  auto teacher = fixtures::teacher_endpoint(
      std::make_shared<fixtures::ScriptedBackend>([](const modelio::ChatRequest&, int) { return ""; }));
  EXPECT_THROW(backward_24_generate(*teacher, PromptTemplate::builtin(DatasetKind::kGame24Backward), bad[0], 1),
               ValidationError);
}

TEST(Batch, DuplicatesAreReplacedByNextExemplar) {
  // Always the same question: only the first survives dedup.
  auto backend = std::make_shared<fixtures::ScriptedBackend>(
      [](const modelio::ChatRequest& r, int) {
        return r.joined_text().find("step by step") != std::string::npos || r.joined_text().size() < 80
                   ? std::string("\\boxed{1}")
                   : std::string("How many apples are left in the basket now?");
      });
  auto teacher = fixtures::teacher_endpoint(backend);
  const auto seed = gsm_seed();
  auto t = PromptTemplate::builtin(DatasetKind::kGsm8kStyle);
  t.few_shot_k = 0;
  DedupHistory history;
  BatchRequest req;
  req.m = 2;
  req.seed = 4;
  const std::vector<std::string> ex{"g3", "g5", "g1"};
  const auto r = synthesize_batch(*teacher, t, seed, ex, {0.9, 0.5, 0.1}, history, req);
  EXPECT_EQ(r.attempts, 6u);
  EXPECT_EQ(r.accepted.size(), 1u);
  ASSERT_EQ(r.outcomes.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(r.outcomes[i].exemplar_id, ex[i % 3]);
  for (std::size_t i = 1; i < 6; ++i) EXPECT_EQ(r.outcomes[i].reject_reason, RejectReason::kDuplicate);
  EXPECT_EQ(r.accepted[0].id, "synth-0-0");
  EXPECT_EQ(r.accepted[0].parent_id, "g3");
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].selection_score, 0.9);
}

TEST(Batch, ResultIndependentOfParallelism) {
  auto reply = [](const modelio::ChatRequest& r, int) {
    return "Item " + std::to_string(*r.seed % 100000) + " " + std::to_string(*r.seed % 977) +
           " \\boxed{" + std::to_string(*r.seed % 10) + "}";
  };
  const auto seed = gsm_seed();
  auto t = PromptTemplate::builtin(DatasetKind::kGsm8kStyle);
  t.few_shot_k = 2;
  std::vector<std::string> snapshots;
  for (std::size_t par : {1u, 4u}) {
    auto teacher = fixtures::teacher_endpoint(std::make_shared<fixtures::ScriptedBackend>(reply));
    DedupHistory history;
    BatchRequest req;
    req.m = 6;
    req.seed = 21;
    req.parallelism = par;
    const auto r = synthesize_batch(*teacher, t, seed, seed.ids(), std::vector<std::optional<double>>(8), history, req);
    std::string snap;
    for (const auto& s : r.accepted) snap += serialize_sample(s) + "\n";
    snapshots.push_back(snap);
  }
  EXPECT_EQ(snapshots[0], snapshots[1]);
  EXPECT_FALSE(snapshots[0].empty());
}

TEST(Batch, StopsWhenBudgetRunsOutMidBatch) {
  auto backend = std::make_shared<fixtures::ScriptedBackend>([](const modelio::ChatRequest& r, int) {
    return "Question " + std::to_string(*r.seed) + " \\boxed{2}";
  });
  auto ledger = std::make_shared<modelio::BudgetLedger>();
  ledger->set_cap(modelio::ModelRole::kTeacher, 45);  // three 15-token calls
  auto teacher = fixtures::teacher_endpoint(backend, ledger);
  const auto seed = gsm_seed();
  auto t = PromptTemplate::builtin(DatasetKind::kGsm8kStyle);
  t.few_shot_k = 0;
  DedupHistory history;
  BatchRequest req;
  req.m = 5;
  const auto r = synthesize_batch(*teacher, t, seed, seed.ids(), std::vector<std::optional<double>>(8), history, req);
  EXPECT_TRUE(r.budget_exhausted);
  EXPECT_EQ(r.accepted.size(), 1u);
  EXPECT_LE(ledger->totals(modelio::ModelRole::kTeacher).total(), 45);
}

TEST(Batch, Game24SkipsDedup) {
  auto backend = std::make_shared<fixtures::ScriptedBackend>([](const modelio::ChatRequest&, int call) {
    return call % 2 == 0 ? std::string("\\boxed{(13-10)*8*1}") : std::string("steps \\boxed{(13-10)*8*1}");
  });
  auto teacher = fixtures::teacher_endpoint(backend);
  const auto seed = game24_seed();
  DedupHistory history;
  BatchRequest req;
  req.m = 3;
  const auto r = synthesize_batch(*teacher, PromptTemplate::builtin(DatasetKind::kGame24Backward), seed, {"p0"},
                                  {std::nullopt}, history, req);
  EXPECT_EQ(r.accepted.size(), 3u);
  EXPECT_EQ(history.size(), 0u);
}
