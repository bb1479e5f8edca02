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

#include <random>
#include <sstream>
#include <thread>

#include "support.hpp"

using namespace itersynth;
using namespace itersynth::modelio;

namespace {

Sample synth(const std::string& id, const std::string& parent, int t) {
  Sample s;
  s.id = id;
  s.question = "q " + id;
  s.answer = "a";
  s.origin = Origin::kSynthetic;
  s.parent_id = parent;
  s.iteration = t;
  return s;
}

}  // namespace

TEST(Sample, ProvenanceRules) {
  EXPECT_NO_THROW(validate_sample(Sample::seed("a", "q", "a")));
  auto bad = Sample::seed("a", "q", "a");
  bad.parent_id = "x";
  EXPECT_THROW(validate_sample(bad), ValidationError);
  EXPECT_THROW(validate_sample(synth("s", "", 0)), ValidationError);
  EXPECT_THROW(validate_sample(Sample::seed("", "q", "a")), ValidationError);
  EXPECT_EQ(synthetic_id(2, 7), "synth-2-7");
}

TEST(Corpus, RejectsDuplicatesAndEmptySeed) {
  EXPECT_THROW(Corpus(CorpusRole::kSeed, {}), ValidationError);
  EXPECT_THROW(Corpus(CorpusRole::kSeed, {Sample::seed("a", "q", "x"), Sample::seed("a", "r", "y")}),
               ValidationError);
  Corpus ok(CorpusRole::kSeed, {Sample::seed("a", "q", "x"), Sample::seed("b", "r", "y")});
  EXPECT_TRUE(ok.contains("b"));
  EXPECT_EQ(ok.at("b").question, "r");
  EXPECT_THROW(ok.at("zz"), ValidationError);
}

TEST(Corpus, JsonlRoundTrip) {
  Corpus c(CorpusRole::kSynthetic,
           {synth("synth-0-0", "p0", 0), synth("synth-0-1", "p1", 0)}, 0);
  auto with_meta = synth("synth-1-0", "p2", 1);
  with_meta.meta["category"] = "algebra";
  with_meta.question = "unicode ✓ and \"quotes\"\nnewline";
  Corpus d(CorpusRole::kSynthetic, {with_meta}, 1);
  for (const Corpus* x : {&c, &d}) {
    std::stringstream ss;
    write_corpus(ss, *x);
    const auto back = parse_corpus(ss, CorpusRole::kSynthetic, "mem");
    EXPECT_EQ(back.samples(), x->samples());
  }
}

TEST(Corpus, ParseErrorsNameTheLine) {
  std::stringstream ss("{\"id\":\"a\",\"question\":\"q\",\"answer\":\"x\"}\n{not json}\n");
  try {
    parse_corpus(ss, CorpusRole::kSeed, "seed.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Corpus, MergeAccumulateKeepsOrderAndCounts) {
  Corpus prev(CorpusRole::kSynthetic, {synth("synth-0-0", "p", 0), synth("synth-0-1", "p", 0)}, 0);
  Corpus cur(CorpusRole::kSynthetic, {synth("synth-1-0", "p", 1)}, 1);
  const auto m = merge_accumulate(cur, prev);
  EXPECT_EQ(m.size(), 3u);
  EXPECT_EQ(m.ids(), (std::vector<std::string>{"synth-0-0", "synth-0-1", "synth-1-0"}));
  EXPECT_EQ(m.created_at_iteration(), 1);
  EXPECT_THROW(merge_accumulate(prev, prev), ValidationError);
  Corpus seed(CorpusRole::kSeed, {Sample::seed("a", "q", "x")});
  EXPECT_THROW(merge_accumulate(seed, prev), ValidationError);
}

// |D̂_t| = Σ accepted over iterations when every batch is merged in turn.
TEST(Corpus, AccumulatedSizeIsSumOfBatches) {
  std::mt19937 gen(1);
  Corpus acc(CorpusRole::kSynthetic, {}, 0);
  std::size_t expected = 0;
  for (int t = 0; t < 6; ++t) {
    const std::size_t k = gen() % 5;
    std::vector<Sample> batch;
    for (std::size_t i = 0; i < k; ++i) batch.push_back(synth(synthetic_id(t, i), "p", t));
    acc = merge_accumulate(Corpus(CorpusRole::kSynthetic, batch, t), acc);
    expected += k;
    EXPECT_EQ(acc.size(), expected);
  }
}

TEST(Corpus, MakeSelectedAndProvenance) {
  Corpus seed(CorpusRole::kSeed, {Sample::seed("a", "q", "x"), Sample::seed("b", "r", "y")});
  const auto sel = make_selected(seed, {"b"}, 2);
  EXPECT_EQ(sel.role(), CorpusRole::kSelected);
  EXPECT_EQ(sel.size(), 1u);
  EXPECT_THROW(make_selected(seed, {"c"}, 2), ValidationError);
  Corpus child(CorpusRole::kSynthetic, {synth("synth-0-0", "a", 0)}, 0);
  EXPECT_NO_THROW(check_provenance({{"a", "synth-0-0", 0, 0.5, "loss_self", {}, {}}}, seed, {&child}));
  EXPECT_THROW(check_provenance({{"zz", "synth-0-0", 0, {}, "", {}, {}}}, seed, {&child}), ValidationError);
  EXPECT_THROW(check_provenance({{"a", "synth-9-9", 0, {}, "", {}, {}}}, seed, {&child}), ValidationError);
}

TEST(Ledger, CapsRejectWholeCharge) {
  BudgetLedger l;
  l.set_cap(ModelRole::kTeacher, 100);
  l.charge(ModelRole::kTeacher, {40, 40, false}, "a");
  EXPECT_THROW(l.charge(ModelRole::kTeacher, {10, 11, false}, "b"), BudgetError);
  EXPECT_EQ(l.totals(ModelRole::kTeacher).total(), 80);
  l.charge(ModelRole::kTeacher, {10, 10, false}, "c");
  EXPECT_THROW(l.ensure_available(ModelRole::kTeacher), BudgetError);
  EXPECT_NO_THROW(l.ensure_available(ModelRole::kStudent));
  EXPECT_THROW(l.charge(ModelRole::kStudent, {-1, 0, false}, "x"), ValidationError);
}

TEST(Ledger, ConcurrentChargesAreConserved) {
  BudgetLedger l;
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&l, t] {
      for (int i = 0; i < 500; ++i) l.charge(ModelRole::kTeacher, {t + 1, 1, false}, "x");
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(l.call_count(), 4000u);
  EXPECT_EQ(l.totals(ModelRole::kTeacher).input_tokens, 500 * (1 + 2 + 3 + 4 + 5 + 6 + 7 + 8));
  EXPECT_EQ(l.totals(ModelRole::kTeacher).output_tokens, 4000);
  std::int64_t sum = 0;
  for (const auto& c : l.calls()) sum += c.usage.total();
  EXPECT_EQ(sum, l.totals(ModelRole::kTeacher).total());
}

TEST(Ledger, SnapshotRestore) {
  BudgetLedger a;
  a.charge(ModelRole::kTeacher, {5, 6, true}, "x");
  a.charge(ModelRole::kReward, {2, 0, false}, "y");
  BudgetLedger b;
  b.restore(a.snapshot());
  EXPECT_EQ(b.totals(ModelRole::kTeacher), a.totals(ModelRole::kTeacher));
  EXPECT_EQ(b.teacher_budget_tokens(true), 13);
  EXPECT_EQ(b.teacher_budget_tokens(false), 11);
}

namespace {

struct Flaky : ModelBackend {
  int failures;
  bool retryable;
  int calls = 0;
  Flaky(int f, bool r) : failures(f), retryable(r) {}
  ChatResponse chat(const ChatRequest&, const StudentState*) override {
    if (calls++ < failures) throw TransportError("HTTP 503", retryable);
    ChatResponse r;
    r.text = "ok";
    r.usage = {3, 1, false};
    return r;
  }
};

RetryPolicy fast_retry(std::vector<std::chrono::milliseconds>* sleeps) {
  RetryPolicy p;
  p.sleep = [sleeps](std::chrono::milliseconds d) { sleeps->push_back(d); };
  return p;
}

}  // namespace

TEST(Endpoint, RetriesTransientFailuresWithBackoff) {
  std::vector<std::chrono::milliseconds> sleeps;
  auto backend = std::make_shared<Flaky>(2, true);
  ModelEndpoint e(ModelRole::kTeacher, {Capability::kGenerate}, Transport::kSimulated, backend,
                  std::make_shared<BudgetLedger>(), {}, fast_retry(&sleeps));
  EXPECT_EQ(chat(e, ChatRequest::user("hi")).text, "ok");
  EXPECT_EQ(backend->calls, 3);
  ASSERT_EQ(sleeps.size(), 2u);
  EXPECT_EQ(sleeps[0].count(), 1000);
  EXPECT_EQ(sleeps[1].count(), 2000);
  // Failed attempts are not charged.
  EXPECT_EQ(e.ledger().call_count(), 1u);
}

TEST(Endpoint, GivesUpAfterThreeAttempts) {
  std::vector<std::chrono::milliseconds> sleeps;
  auto backend = std::make_shared<Flaky>(5, true);
  ModelEndpoint e(ModelRole::kTeacher, {Capability::kGenerate}, Transport::kSimulated, backend,
                  std::make_shared<BudgetLedger>(), {}, fast_retry(&sleeps));
  EXPECT_THROW(chat(e, ChatRequest::user("hi")), TransportError);
  EXPECT_EQ(backend->calls, 3);
  EXPECT_EQ(e.ledger().call_count(), 0u);
}

TEST(Endpoint, NonRetryableFailsImmediately) {
  std::vector<std::chrono::milliseconds> sleeps;
  auto backend = std::make_shared<Flaky>(1, false);
  ModelEndpoint e(ModelRole::kTeacher, {Capability::kGenerate}, Transport::kSimulated, backend,
                  std::make_shared<BudgetLedger>(), {}, fast_retry(&sleeps));
  EXPECT_THROW(chat(e, ChatRequest::user("hi")), TransportError);
  EXPECT_EQ(backend->calls, 1);
  EXPECT_TRUE(sleeps.empty());
}

TEST(Endpoint, CapabilityAndRoleChecks) {
  auto backend = std::make_shared<Flaky>(0, false);
  ModelEndpoint e(ModelRole::kTeacher, {Capability::kGenerate}, Transport::kSimulated, backend,
                  std::make_shared<BudgetLedger>());
  EXPECT_THROW(answer_logprobs(e, StudentState{}, "p", "a"), UnsupportedCapabilityError);
  EXPECT_THROW(student_greedy_generate(e, StudentState{}, "p"), ValidationError);
  EXPECT_THROW(ModelEndpoint(ModelRole::kStudent, {Capability::kGenerate}, Transport::kSimulated, backend,
                             std::make_shared<BudgetLedger>()),
               ValidationError);
  EXPECT_THROW(ModelEndpoint(ModelRole::kReward, {}, Transport::kSimulated, backend,
                             std::make_shared<BudgetLedger>()),
               ValidationError);
}

TEST(Endpoint, PositiveLogprobIsProtocolError) {
  struct Bad : ModelBackend {
    ChatResponse chat(const ChatRequest&, const StudentState*) override {
      ChatResponse r;
      r.token_logprobs = std::vector<TokenLogprob>{{"x", 0.3}};
      return r;
    }
  };
  ModelEndpoint e(ModelRole::kTeacher, {Capability::kGenerate}, Transport::kSimulated,
                  std::make_shared<Bad>(), std::make_shared<BudgetLedger>());
  auto req = ChatRequest::user("p");
  req.want_logprobs = true;
  EXPECT_THROW(chat(e, req), ProtocolError);
}

TEST(Templates, RenderRules) {
  EXPECT_EQ(render_template("a {{x}} b", {{"x", "1"}}), "a 1 b");
  EXPECT_EQ(render_template("{{#x}}[{{x}}]{{/x}}.", {{"x", ""}}), ".");
  EXPECT_EQ(render_template("{{#x}}[{{x}}]{{/x}}.", {{"x", "y"}}), "[y].");
  EXPECT_THROW(render_template("{{missing}}", {}), TemplateError);
  EXPECT_THROW(render_template("{{#s}}open", {}), TemplateError);
  EXPECT_THROW(load_asset("no_such_asset"), TemplateError);
}

TEST(Templates, DirectoryOverride) {
  fixtures::TempDir dir;
  detail::write_file_atomic(dir / "judge_pair.txt", "custom {{question}}\n");
  EXPECT_EQ(load_asset("judge_pair", dir.path()), "custom {{question}}");
  EXPECT_NE(load_asset("judge_pair"), "custom {{question}}");
}

TEST(Rng, DeterministicAndLabelSeparated) {
  detail::Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(detail::derive_seed(1, "x"), detail::derive_seed(1, "y"));
  EXPECT_NE(detail::derive_seed(1, "x", {1}), detail::derive_seed(1, "x", {2}));
  EXPECT_EQ(detail::derive_seed(1, "x", {2}), detail::derive_seed(1, "x", {2}));
  detail::Rng r(9);
  double sum = 0;
  for (int i = 0; i < 20000; ++i) sum += r.uniform();
  EXPECT_NEAR(sum / 20000, 0.5, 0.01);
  EXPECT_EQ(r.weighted_index({0.0, 0.0}), 2u);
}
