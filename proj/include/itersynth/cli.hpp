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

#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "itersynth/analysis.hpp"
#include "itersynth/backends.hpp"
#include "itersynth/config.hpp"
#include "itersynth/engine.hpp"
#include "itersynth/error.hpp"

namespace itersynth::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

inline int exit_code_for(ErrorKind kind) {
  return is_runtime_failure(kind) ? kExitRuntime : kExitConfig;
}

inline void report_error(std::ostream& err, std::string_view kind, std::string_view message) {
  nlohmann::ordered_json j;
  j["error"] = {{"kind", std::string(kind)}, {"message", std::string(message)}};
  err << j.dump() << '\n';
}

struct Options {
  std::string config;
  std::vector<std::string> sets;
  bool dry_run = false;
  bool resume = false;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  std::string scores;
  std::string selected;
  std::string state;
  std::vector<std::string> manifests;
};

namespace detail_cli {

inline RunConfig load(const Options& o) {
  if (o.config.empty()) throw ValidationError("--config is required");
  auto sets = o.sets;
  if (o.seed) sets.push_back("run.seeds=[" + std::to_string(*o.seed) + "]");
  auto c = load_run_config(o.config, sets);
  if (!o.out.empty()) c.output_dir = o.out;
  return c;
}

inline engine::RunOptions run_options(const Options& o, std::ostream& err) {
  engine::RunOptions r;
  if (!o.quiet) {
    r.progress = [&err](std::uint64_t seed, int t, const std::string& msg) {
      err << "[seed " << seed << " iter " << t << "] " << msg << '\n';
    };
  }
  return r;
}

inline void print_summary(const engine::RunManifest& m, std::ostream& out) {
  nlohmann::ordered_json j;
  j["status"] = std::string(engine::to_string(m.status));
  j["manifest"] = (m.directory / "manifest.json").generic_string();
  j["config_hash"] = m.config_hash;
  auto reps = nlohmann::ordered_json::array();
  for (const auto& r : m.replicates) {
    nlohmann::ordered_json rj;
    rj["seed"] = r.seed;
    rj["status"] = std::string(engine::to_string(r.status));
    auto acc = nlohmann::ordered_json::array();
    for (const auto& s : r.iterations) acc.push_back(s.accuracy);
    rj["accuracy"] = acc;
    reps.push_back(rj);
  }
  j["replicates"] = reps;
  out << j.dump(2) << '\n';
}

inline int finish(const engine::RunManifest& m, std::ostream& out, std::ostream& err) {
  print_summary(m, out);
  if (m.status == engine::RunStatus::kStoppedBudget) {
    for (const auto& r : m.replicates) {
      if (r.status == engine::RunStatus::kStoppedBudget) {
        report_error(err, "budget", "seed " + std::to_string(r.seed) + ": " + r.error.value_or(""));
        break;
      }
    }
    return kExitRuntime;
  }
  return kExitOk;
}

// Standalone verbs work on the seed corpus with the base (or a stored) student.
struct Session {
  RunConfig config;
  engine::Datasets data;
  engine::Endpoints endpoints;
  engine::ProgressFn progress;
  engine::detail_engine::PredictionCache cache;
  std::unique_ptr<engine::detail_engine::Pipeline> pipe;

  explicit Session(const Options& o) : config(load(o)) {
    data = engine::load_datasets(config);
    endpoints = make_endpoints(config);
    pipe = std::make_unique<engine::detail_engine::Pipeline>(
        config, data, endpoints, config.seeds.front(), config.output_dir, cache, progress);
    if (!o.state.empty()) {
      const auto j = nlohmann::json::parse(detail::read_file(o.state));
      modelio::StudentState s;
      s.id = j.at("id").get<std::string>();
      s.payload = j.at("payload");
      pipe->set_state(s);
    }
  }

  std::vector<const Sample*> seed_samples() const {
    std::vector<const Sample*> v;
    for (const auto& s : data.seed) v.push_back(&s);
    return v;
  }

  std::uint64_t seed() const { return detail::derive_seed(config.seeds.front(), "iteration", {0}); }
};

inline void write_or_print(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty()) {
    out << content;
  } else {
    detail::write_file_atomic(path, content);
    out << path << '\n';
  }
}

inline int cmd_run(const Options& o, std::ostream& out, std::ostream& err) {
  auto c = load(o);
  if (o.dry_run) {
    out << engine::plan(c).dump(2) << '\n';
    return kExitOk;
  }
  if (o.resume && std::filesystem::exists(c.output_dir / "manifest.json")) {
    return finish(engine::resume(c.output_dir, c, run_options(o, err)), out, err);
  }
  return finish(engine::run(c, run_options(o, err)), out, err);
}

inline int cmd_resume(const Options& o, std::ostream& out, std::ostream& err) {
  std::filesystem::path dir = o.out;
  std::optional<RunConfig> c;
  if (!o.config.empty()) {
    c = load(o);
    if (dir.empty()) dir = c->output_dir;
  }
  if (dir.empty()) throw ValidationError("resume needs --out <run dir> or --config");
  if (o.dry_run) {
    auto m = engine::load_manifest(dir);
    print_summary(m, out);
    return kExitOk;
  }
  return finish(engine::resume(dir, c, run_options(o, err)), out, err);
}

inline int cmd_score(const Options& o, std::ostream& out) {
  Session s(o);
  if (o.dry_run) {
    out << engine::plan(s.config).dump(2) << '\n';
    return kExitOk;
  }
  std::string text;
  if (s.config.selection.strategy == selection::Strategy::kBadge) {
    for (const auto& e : s.pipe->embed(s.pipe->state(), s.seed_samples())) {
      text += scoring::to_json(e).dump() + "\n";
    }
  } else {
    for (const auto& sc : s.pipe->score(s.pipe->state(), s.seed_samples(), s.seed())) {
      text += scoring::to_json(sc).dump() + "\n";
    }
  }
  write_or_print(o.out.empty() ? "" : o.out, text, out);
  return kExitOk;
}

inline int cmd_select(const Options& o, std::ostream& out) {
  auto c = load(o);
  if (o.scores.empty() && c.selection.strategy != selection::Strategy::kRandom) {
    throw ValidationError("select needs --scores <scores.jsonl>");
  }
  const auto data = engine::load_datasets(c);
  const std::size_t k = std::min(data.seed.size(), 3 * c.selection.m);
  selection::check_batch(c.selection.m, data.seed.size());
  const auto seed = detail::derive_seed(detail::derive_seed(c.seeds.front(), "iteration", {0}), "select");
  std::vector<std::string> ranked;
  if (c.selection.strategy == selection::Strategy::kRandom) {
    std::vector<std::string> ids;
    for (const auto& s : data.seed) ids.push_back(s.id);
    ranked = selection::select_random(ids, k, seed);
  } else if (c.selection.strategy == selection::Strategy::kBadge) {
    std::vector<scoring::GradEmbedding> emb;
    std::istringstream in(detail::read_file(o.scores));
    for (std::string line; std::getline(in, line);) {
      if (detail::trim(line).empty()) continue;
      const auto j = nlohmann::json::parse(line);
      emb.push_back({j.at("sample_id").get<std::string>(), j.at("vector").get<std::vector<double>>()});
    }
    ranked = selection::select_badge(emb, k, seed, c.selection.badge_anchor);
  } else {
    std::ifstream in(o.scores);
    if (!in) throw IoError("cannot open scores file " + o.scores);
    ranked = engine::detail_engine::rank_scores(c, scoring::read_scores(in), k, seed);
  }
  nlohmann::ordered_json j;
  j["selected"] = std::vector<std::string>(ranked.begin(),
                                           ranked.begin() + static_cast<std::ptrdiff_t>(
                                                                std::min(ranked.size(), c.selection.m)));
  j["ranked"] = ranked;
  write_or_print(o.out, j.dump(2) + "\n", out);
  return kExitOk;
}

inline int cmd_generate(const Options& o, std::ostream& out) {
  Session s(o);
  if (o.selected.empty()) throw ValidationError("generate needs --selected <selected.json>");
  const auto sel = nlohmann::json::parse(detail::read_file(o.selected));
  const auto& list = sel.contains("ranked") ? sel["ranked"] : sel.at("selected");
  std::vector<std::string> ids = list.get<std::vector<std::string>>();
  std::vector<std::optional<double>> scores(ids.size());
  synthgen::BatchRequest req;
  req.iteration = 0;
  req.m = std::min(s.config.selection.m, sel.at("selected").size());
  req.seed = s.seed();
  req.parallelism = s.config.parallelism;
  req.scorer_kind = std::string(scoring::to_string(s.config.scorer));
  auto batch = synthgen::synthesize_batch(*s.endpoints.teacher, s.pipe->prompt_template(), s.data.seed,
                                          ids, scores, s.pipe->history(), req);
  std::ostringstream text;
  write_corpus(text, Corpus(CorpusRole::kSynthetic, batch.accepted, 0));
  write_or_print(o.out, text.str(), out);
  if (batch.budget_exhausted) throw BudgetError("teacher budget exhausted during generation");
  return kExitOk;
}

inline int cmd_evaluate(const Options& o, std::ostream& out) {
  Session s(o);
  std::vector<verify::Verdict> verdicts;
  const auto acc = s.pipe->evaluate(s.pipe->state(), &verdicts);
  nlohmann::ordered_json j;
  j["student_state"] = s.pipe->state().id;
  j["test_size"] = s.data.test.size();
  j["accuracy"] = acc.mean;
  j["standard_error"] = acc.standard_error;
  if (!o.out.empty()) {
    std::string rows;
    for (const auto& v : verdicts) rows += verify::to_json(v).dump() + "\n";
    detail::write_file_atomic(o.out, rows);
  }
  out << j.dump(2) << '\n';
  return kExitOk;
}

inline int cmd_analyze(const Options& o, std::ostream& out) {
  if (o.manifests.empty()) throw ValidationError("analyze needs at least one manifest");
  if (o.out.empty()) throw ValidationError("analyze needs --out <report dir>");
  std::vector<engine::RunManifest> ms;
  for (const auto& p : o.manifests) ms.push_back(engine::load_manifest(p));
  for (const auto& f : analysis::emit_report(ms, o.out)) out << f.generic_string() << '\n';
  return kExitOk;
}

}  // namespace detail_cli

/// Parses argv and runs one verb. Errors become a JSON line on `err`.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Iterative student-guided synthetic data generation", "itersynth"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ITERSYNTH_VERSION));
  Options o;
  auto common = [&o](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "run configuration (TOML)");
    if (needs_config) c->required();
    sub->add_option("--set", o.sets, "override a config key, e.g. --set selection.m=20");
    sub->add_option("--seed", o.seed, "replace run.seeds with a single seed");
    sub->add_flag("--dry-run", o.dry_run, "validate and print the plan without side effects");
    sub->add_flag("-q,--quiet", o.quiet, "suppress progress lines");
  };
  auto* run = app.add_subcommand("run", "run the full loop for every replicate seed");
  common(run, true);
  run->add_option("--out", o.out, "output directory (overrides run.output_dir)");
  run->add_flag("--resume", o.resume, "continue an existing run in the output directory");
  auto* resume = app.add_subcommand("resume", "continue an interrupted or budget-stopped run");
  common(resume, false);
  resume->add_option("--out", o.out, "run directory or manifest path");
  auto* score = app.add_subcommand("score", "score the seed corpus with the current student");
  common(score, true);
  score->add_option("--out", o.out, "write JSON lines here instead of stdout");
  score->add_option("--state", o.state, "student.json of a fine-tuned student");
  auto* select = app.add_subcommand("select", "rank and select exemplars from a scores file");
  common(select, true);
  select->add_option("--scores", o.scores, "scores.jsonl or embeddings.jsonl");
  select->add_option("--out", o.out, "write selected.json here instead of stdout");
  auto* generate = app.add_subcommand("generate", "synthesize samples from selected exemplars");
  common(generate, true);
  generate->add_option("--selected", o.selected, "selected.json")->required();
  generate->add_option("--out", o.out, "write synthetic JSON lines here instead of stdout");
  auto* evaluate = app.add_subcommand("evaluate", "test accuracy of a student");
  common(evaluate, true);
  evaluate->add_option("--state", o.state, "student.json of a fine-tuned student");
  evaluate->add_option("--out", o.out, "write verdicts here");
  auto* analyze = app.add_subcommand("analyze", "emit CSV/SVG reports for completed runs");
  analyze->add_option("manifests", o.manifests, "manifest.json files or run directories");
  analyze->add_option("--out", o.out, "report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << ITERSYNTH_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    err << app.help();
    return kExitConfig;
  }

  try {
    if (*run) return detail_cli::cmd_run(o, out, err);
    if (*resume) return detail_cli::cmd_resume(o, out, err);
    if (*score) return detail_cli::cmd_score(o, out);
    if (*select) return detail_cli::cmd_select(o, out);
    if (*generate) return detail_cli::cmd_generate(o, out);
    if (*evaluate) return detail_cli::cmd_evaluate(o, out);
    if (*analyze) return detail_cli::cmd_analyze(o, out);
  } catch (const Error& e) {
    report_error(err, to_string(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    report_error(err, "parse", e.what());
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    report_error(err, "io", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace itersynth::cli
