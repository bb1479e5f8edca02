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

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "itersynth/itersynth.hpp"

namespace itersynth::fixtures {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("itersynth-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Backend answering chat calls from a callback; records every request.
class ScriptedBackend : public modelio::ModelBackend {
 public:
  using Reply = std::function<std::string(const modelio::ChatRequest&, int call)>;

  explicit ScriptedBackend(Reply reply, modelio::TokenUsage usage = {10, 5, false})
      : reply_(std::move(reply)), usage_(usage) {}

  modelio::ChatResponse chat(const modelio::ChatRequest& request,
                             const modelio::StudentState*) override {
    std::lock_guard lock(mu_);
    requests.push_back(request);
    modelio::ChatResponse r;
    r.text = reply_(request, static_cast<int>(requests.size()) - 1);
    r.usage = usage_;
    if (request.want_logprobs) {
      std::vector<modelio::TokenLogprob> lps;
      for (auto& t : detail::split_whitespace(r.text)) lps.push_back({t, -0.5});
      r.token_logprobs = lps;
    }
    return r;
  }

  std::vector<modelio::ChatRequest> requests;

 private:
  std::mutex mu_;
  Reply reply_;
  modelio::TokenUsage usage_;
};

inline std::shared_ptr<modelio::ModelEndpoint> teacher_endpoint(
    std::shared_ptr<modelio::ModelBackend> backend,
    std::shared_ptr<modelio::BudgetLedger> ledger = std::make_shared<modelio::BudgetLedger>()) {
  return std::make_shared<modelio::ModelEndpoint>(
      modelio::ModelRole::kTeacher, std::set<modelio::Capability>{modelio::Capability::kGenerate},
      modelio::Transport::kSimulated, std::move(backend), std::move(ledger));
}

inline std::shared_ptr<modelio::ModelEndpoint> sim_student_endpoint(
    const modelio::sim::SimWorld& world,
    std::shared_ptr<modelio::BudgetLedger> ledger = std::make_shared<modelio::BudgetLedger>()) {
  using modelio::Capability;
  return std::make_shared<modelio::ModelEndpoint>(
      modelio::ModelRole::kStudent,
      std::set<Capability>{Capability::kGenerate, Capability::kLogprobs,
                           Capability::kGradEmbedding, Capability::kFinetune},
      modelio::Transport::kSimulated, std::make_shared<modelio::sim::SimStudentBackend>(world),
      std::move(ledger));
}

// Small fully simulated run configuration.
inline RunConfig sim_config(const std::filesystem::path& out, int iterations = 3,
                            std::vector<std::uint64_t> seeds = {0, 1, 2}, std::size_t m = 50) {
  auto root = toml_io::parse(R"(
[run]
name = "test"
[data]
kind = "gsm8k_style"
source = "sim"
sim_seed_size = 400
sim_validation_size = 100
sim_test_size = 400
[selection]
strategy = "argmax"
direction = "high"
scorer = "loss_self"
[finetune]
preset = "gsm8k_synthetic"
epochs = 1
)", "test");
  auto c = run_config_from_json(root);
  c.output_dir = out;
  c.iterations = iterations;
  c.seeds = std::move(seeds);
  c.selection.m = m;
  return c;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::vector<std::string> out;
  std::istringstream in(detail::read_file(p));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// Every regular file under `root` keyed by relative path.
inline std::map<std::string, std::string> snapshot_tree(const std::filesystem::path& root,
                                                        const std::set<std::string>& skip = {}) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), root).generic_string();
    if (skip.count(rel)) continue;
    out[rel] = detail::read_file(e.path());
  }
  return out;
}

}  // namespace itersynth::fixtures
