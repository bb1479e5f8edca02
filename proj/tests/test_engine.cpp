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

#include "support.hpp"

namespace itersynth {
namespace {

using fixtures::TempDir;
using fixtures::sim_config;
using fixtures::snapshot_tree;

const std::set<std::string> kVolatile{"timing.json"};

TEST(Engine, TrainSizesGrowByM) {
  TempDir tmp;
  const auto m = engine::run(sim_config(tmp.path(), 3, {0, 1}));
  EXPECT_EQ(m.status, engine::RunStatus::kComplete);
  ASSERT_EQ(m.replicates.size(), 2u);
  for (const auto& r : m.replicates) {
    ASSERT_EQ(r.iterations.size(), 3u);
    for (int t = 0; t < 3; ++t) {
      const auto& s = r.iterations[t];
      EXPECT_EQ(s.t, t);
      EXPECT_EQ(s.selected, 50u);
      EXPECT_EQ(s.accepted, 50u);
      EXPECT_EQ(s.train_size, 50u * static_cast<std::size_t>(t + 1));
      EXPECT_GE(s.attempts, s.accepted);
      EXPECT_LE(s.attempts, 150u);
    }
  }
  EXPECT_TRUE(std::filesystem::exists(tmp / "learning_curve.csv"));
  EXPECT_TRUE(std::filesystem::exists(tmp / "config.toml"));
  EXPECT_EQ(fixtures::read_lines(tmp / "learning_curve.csv").size(), 1u + 2 * 3);
}

TEST(Engine, ManifestRoundTrips) {
  TempDir tmp;
  const auto m = engine::run(sim_config(tmp.path(), 2, {3}));
  const auto back = engine::load_manifest(tmp.path());
  EXPECT_EQ(engine::to_json(back).dump(), engine::to_json(m).dump());
  EXPECT_EQ(back.directory, tmp.path());
  EXPECT_EQ(engine::load_manifest(tmp / "manifest.json").config_hash, m.config_hash);
}

TEST(Engine, SelectedNeverRepeatsAcrossIterations) {
  TempDir tmp;
  engine::run(sim_config(tmp.path(), 3, {0}));
  std::set<std::string> seen;
  for (int t = 0; t < 3; ++t) {
    const auto sel = nlohmann::json::parse(
        detail::read_file(engine::iteration_dir(tmp.path(), 0, t) / "selected.json"));
    EXPECT_EQ(sel.at("selected").size(), 50u);
    EXPECT_EQ(sel.at("ranked").size(), 150u);
    for (const auto& id : sel.at("selected")) {
      EXPECT_TRUE(seen.insert(id.get<std::string>()).second) << id;
    }
  }
}

TEST(Engine, SyntheticProvenance) {
  TempDir tmp;
  engine::run(sim_config(tmp.path(), 2, {0}));
  for (int t = 0; t < 2; ++t) {
    const auto dir = engine::iteration_dir(tmp.path(), 0, t);
    const auto synth = load_corpus(dir / "synthetic.jsonl", CorpusRole::kSynthetic);
    const auto sel = nlohmann::json::parse(detail::read_file(dir / "selected.json"));
    std::set<std::string> ranked;
    for (const auto& id : sel.at("ranked")) ranked.insert(id.get<std::string>());
    for (const auto& s : synth) {
      ASSERT_TRUE(s.parent_id.has_value());
      EXPECT_TRUE(ranked.count(*s.parent_id)) << *s.parent_id;
      EXPECT_EQ(s.iteration, t);
    }
  }
}

TEST(Engine, DeterministicAcrossOutputDirs) {
  TempDir a, b;
  engine::run(sim_config(a.path(), 2, {0, 1}));
  engine::run(sim_config(b.path(), 2, {0, 1}));
  const auto sa = snapshot_tree(a.path(), kVolatile);
  const auto sb = snapshot_tree(b.path(), kVolatile);
  ASSERT_EQ(sa.size(), sb.size());
  for (const auto& [name, content] : sa) {
    ASSERT_TRUE(sb.count(name)) << name;
    EXPECT_EQ(content, sb.at(name)) << name;
  }
}

TEST(Engine, ParallelismDoesNotChangeResults) {
  TempDir a, b;
  const auto ma = engine::run(sim_config(a.path(), 2, {0}));
  auto cb = sim_config(b.path(), 2, {0});
  cb.parallelism = 4;
  const auto mb = engine::run(cb);
  EXPECT_EQ(ma.config_hash, mb.config_hash);
  for (int t = 0; t < 2; ++t) {
    EXPECT_EQ(snapshot_tree(engine::iteration_dir(a.path(), 0, t)),
              snapshot_tree(engine::iteration_dir(b.path(), 0, t)));
  }
}

TEST(Engine, SeedsChangeResults) {
  TempDir tmp;
  engine::run(sim_config(tmp.path(), 1, {0, 1}));
  EXPECT_NE(detail::read_file(engine::iteration_dir(tmp.path(), 0, 0) / "synthetic.jsonl"),
            detail::read_file(engine::iteration_dir(tmp.path(), 1, 0) / "synthetic.jsonl"));
}

TEST(Engine, ResumeIsByteIdentical) {
  TempDir full, part;
  engine::run(sim_config(full.path(), 3, {0, 1}));

  engine::RunOptions stop;
  stop.stop_after_iterations = 2;
  const auto interrupted = engine::run(sim_config(part.path(), 3, {0, 1}), stop);
  EXPECT_EQ(interrupted.status, engine::RunStatus::kIncomplete);
  for (const auto& r : interrupted.replicates) EXPECT_EQ(r.iterations.size(), 2u);
  EXPECT_FALSE(std::filesystem::exists(engine::iteration_dir(part.path(), 0, 2)));

  const auto resumed = engine::resume(part.path());
  EXPECT_EQ(resumed.status, engine::RunStatus::kComplete);

  const auto sa = snapshot_tree(full.path(), kVolatile);
  const auto sb = snapshot_tree(part.path(), kVolatile);
  ASSERT_EQ(sa.size(), sb.size());
  for (const auto& [name, content] : sa) {
    ASSERT_TRUE(sb.count(name)) << name;
    EXPECT_EQ(content, sb.at(name)) << name;
  }
}

TEST(Engine, ResumeOfCompleteRunIsNoop) {
  TempDir tmp;
  engine::run(sim_config(tmp.path(), 1, {0}));
  const auto before = snapshot_tree(tmp.path());
  const auto m = engine::resume(tmp.path());
  EXPECT_EQ(m.status, engine::RunStatus::kComplete);
  EXPECT_EQ(snapshot_tree(tmp.path()), before);
}

TEST(Engine, ResumeRejectsDifferentConfig) {
  TempDir tmp;
  engine::RunOptions stop;
  stop.stop_after_iterations = 1;
  engine::run(sim_config(tmp.path(), 3, {0}), stop);
  auto other = sim_config(tmp.path(), 3, {0}, 40);
  EXPECT_THROW(engine::resume(tmp.path(), other), IntegrityError);
  // Operational fields do not count.
  auto same = sim_config(tmp.path(), 3, {0});
  same.parallelism = 3;
  same.budget.teacher = 1'000'000'000;
  EXPECT_NO_THROW(engine::resume(tmp.path(), same, stop));
}

TEST(Engine, ResumeDetectsTamperedArtifacts) {
  TempDir tmp;
  engine::RunOptions stop;
  stop.stop_after_iterations = 1;
  engine::run(sim_config(tmp.path(), 3, {0}), stop);
  const auto file = engine::iteration_dir(tmp.path(), 0, 0) / "synthetic.jsonl";
  detail::write_file_atomic(file, detail::read_file(file) + "\n");
  EXPECT_THROW(engine::resume(tmp.path()), IntegrityError);
  std::filesystem::remove(file);
  EXPECT_THROW(engine::resume(tmp.path()), IntegrityError);
}

TEST(Engine, MissingOrCorruptManifest) {
  TempDir tmp;
  EXPECT_THROW(engine::load_manifest(tmp.path()), IoError);
  detail::write_file_atomic(tmp / "manifest.json", "{not json");
  EXPECT_THROW(engine::load_manifest(tmp.path()), IntegrityError);
  detail::write_file_atomic(tmp / "manifest.json", R"({"format":"other"})");
  EXPECT_THROW(engine::load_manifest(tmp.path()), IntegrityError);
}

TEST(Engine, BudgetStopThenResumeWithLargerCap) {
  TempDir full, capped;
  const auto ref = engine::run(sim_config(full.path(), 3, {0}));
  const auto& its = ref.replicates[0].iterations;
  const std::int64_t t0 = its[0].teacher_tokens;
  const std::int64_t t1 = its[1].teacher_tokens;
  ASSERT_GT(t1, t0);

  auto c = sim_config(capped.path(), 3, {0});
  c.budget.teacher = t0 + (t1 - t0) / 2;
  const auto stopped = engine::run(c);
  EXPECT_EQ(stopped.status, engine::RunStatus::kStoppedBudget);
  EXPECT_TRUE(stopped.stopped_on_budget());
  ASSERT_EQ(stopped.replicates[0].iterations.size(), 1u);
  EXPECT_TRUE(stopped.replicates[0].error.has_value());
  EXPECT_FALSE(std::filesystem::exists(engine::iteration_dir(capped.path(), 0, 1)));
  EXPECT_LE(stopped.replicates[0].iterations[0].teacher_tokens, *c.budget.teacher);

  c.budget.teacher.reset();
  const auto resumed = engine::resume(capped.path(), c);
  EXPECT_EQ(resumed.status, engine::RunStatus::kComplete);
  ASSERT_EQ(resumed.replicates[0].iterations.size(), 3u);
  for (int t = 0; t < 3; ++t) {
    const auto a = snapshot_tree(engine::iteration_dir(full.path(), 0, t));
    const auto b = snapshot_tree(engine::iteration_dir(capped.path(), 0, t));
    EXPECT_EQ(a, b) << "iteration " << t;
  }
}

TEST(Engine, StudentIsRetrainedFromBaseOnAccumulatedData) {
  TempDir tmp;
  const auto cfg = sim_config(tmp.path(), 3, {0});
  engine::run(cfg);
  const auto data = engine::load_datasets(cfg);
  const modelio::sim::SimWorld world(cfg.sim);
  Corpus acc(CorpusRole::kSynthetic, {}, 0);
  for (int t = 0; t < 3; ++t) {
    const auto dir = engine::iteration_dir(tmp.path(), 0, t);
    acc = merge_accumulate(load_corpus(dir / "synthetic.jsonl", CorpusRole::kSynthetic), acc);
    const auto st = nlohmann::json::parse(detail::read_file(dir / "student.json"));
    const auto expected = world.train(acc, data.validation, cfg.finetune.epochs);
    const auto got = st.at("payload").at("mastery").get<std::vector<double>>();
    ASSERT_EQ(got.size(), expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_DOUBLE_EQ(got[i], expected[i]);
  }
}

TEST(Engine, LedgerConservation) {
  TempDir tmp;
  const auto m = engine::run(sim_config(tmp.path(), 3, {0}));
  std::int64_t teacher = 0, student = 0;
  std::size_t calls = 0;
  for (int t = 0; t < 3; ++t) {
    const auto dir = engine::iteration_dir(tmp.path(), 0, t);
    for (const auto& line : fixtures::read_lines(dir / "calls.jsonl")) {
      const auto c = modelio::call_record_from_json(nlohmann::json::parse(line));
      const auto total = c.usage.input_tokens + c.usage.output_tokens;
      EXPECT_GE(total, 0);
      (c.role == modelio::ModelRole::kTeacher ? teacher : student) += total;
      ++calls;
    }
    const auto ledger = nlohmann::json::parse(detail::read_file(dir / "ledger.json"));
    const auto& g = ledger.at("generation");
    ASSERT_EQ(g.at("teacher").at("input_tokens").get<std::int64_t>() +
                  g.at("teacher").at("output_tokens").get<std::int64_t>(),
              teacher);
    EXPECT_EQ(g.at("student").at("input_tokens").get<std::int64_t>() +
                  g.at("student").at("output_tokens").get<std::int64_t>(),
              student);
    EXPECT_EQ(g.at("calls").get<std::size_t>(), calls);
    EXPECT_EQ(m.replicates[0].iterations[t].teacher_tokens, teacher);
  }
  EXPECT_GT(teacher, 0);
}

TEST(Engine, ProgressCallbackSeesEveryIteration) {
  TempDir tmp;
  engine::RunOptions opts;
  std::set<std::pair<std::uint64_t, int>> seen;
  opts.progress = [&](std::uint64_t seed, int t, const std::string&) { seen.insert({seed, t}); };
  engine::run(sim_config(tmp.path(), 2, {4, 5}), opts);
  EXPECT_EQ(seen, (std::set<std::pair<std::uint64_t, int>>{{4, 0}, {4, 1}, {5, 0}, {5, 1}}));
}

TEST(Engine, PlanListsExpectedSizes) {
  TempDir tmp;
  const auto p = engine::plan(sim_config(tmp.path(), 4, {0}, 20));
  EXPECT_EQ(p.at("expected_train_sizes"), nlohmann::ordered_json({20, 40, 60, 80}));
  EXPECT_EQ(p.at("scorer"), "loss_self");
  EXPECT_FALSE(std::filesystem::exists(tmp / "manifest.json"));
}

TEST(Engine, OtherStrategiesRun) {
  for (const char* set : {"selection.strategy=\"random\"", "selection.strategy=\"badge\"",
                          "selection.strategy=\"softmax_sample\"", "selection.scorer=\"correctness\""}) {
    TempDir tmp;
    auto root = toml_io::parse(to_toml(sim_config(tmp.path(), 2, {0}, 30)));
    toml_io::apply_override(root, set);
    auto c = run_config_from_json(root);
    c.output_dir = tmp.path();
    const auto m = engine::run(c);
    EXPECT_EQ(m.status, engine::RunStatus::kComplete) << set;
    EXPECT_EQ(m.replicates[0].iterations.back().train_size, 60u) << set;
  }
}

// Report emission.

std::vector<engine::RunManifest> two_runs(const std::filesystem::path& root) {
  auto a = sim_config(root / "a", 3, {0, 1});
  a.name = "loss_self";
  auto b = sim_config(root / "b", 3, {0, 1});
  b.name = "random";
  b.selection.strategy = selection::Strategy::kRandom;
  return {engine::run(a), engine::run(b)};
}

TEST(Report, DeterministicFiles) {
  TempDir tmp;
  const auto runs = two_runs(tmp.path());
  const auto p1 = analysis::emit_report(runs, tmp / "r1");
  const auto p2 = analysis::emit_report(
      {engine::load_manifest(tmp / "a"), engine::load_manifest(tmp / "b")}, tmp / "r2");
  ASSERT_EQ(p1.size(), p2.size());
  ASSERT_FALSE(p1.empty());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    EXPECT_EQ(p1[i].filename(), p2[i].filename());
    EXPECT_EQ(detail::read_file(p1[i]), detail::read_file(p2[i])) << p1[i];
  }
  const auto curve = fixtures::read_lines(tmp / "r1" / p1[0].filename());
  EXPECT_EQ(curve.size(), 1u + 2 * 3);
}

TEST(Report, LearningCurveAggregatesReplicates) {
  TempDir tmp;
  const auto runs = two_runs(tmp.path());
  const auto c = analysis::learning_curve(runs[0], "x");
  ASSERT_EQ(c.points.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(c.points[t].n, 50 * (t + 1));
    EXPECT_EQ(c.points[t].replicates, 2u);
    const double mean = (runs[0].replicates[0].iterations[t].accuracy +
                         runs[0].replicates[1].iterations[t].accuracy) / 2;
    EXPECT_NEAR(c.points[t].mean, mean, 1e-12);
  }
}

TEST(Report, RejectsIncompleteRuns) {
  TempDir tmp;
  engine::RunOptions stop;
  stop.stop_after_iterations = 1;
  const auto m = engine::run(sim_config(tmp / "run", 3, {0}), stop);
  try {
    analysis::emit_report({m}, tmp / "report");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("missing iteration 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(analysis::emit_report({}, tmp / "report"), ValidationError);
}

}  // namespace
}  // namespace itersynth
