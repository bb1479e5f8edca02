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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "itersynth/corpus.hpp"
#include "itersynth/detail/text.hpp"
#include "itersynth/error.hpp"
#include "itersynth/modelio/finetune.hpp"
#include "itersynth/modelio/ledger.hpp"
#include "itersynth/modelio/types.hpp"

namespace itersynth::modelio {

/// Transport-level contract every teacher, student and reward backend
/// implements. Unimplemented capabilities throw UnsupportedCapabilityError.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  virtual ChatResponse chat(const ChatRequest& request,
                            const StudentState* state) = 0;

  // Teacher-forced log-probabilities of `answer` given the prompt, one entry
  // per answer token.
  virtual std::vector<TokenLogprob> answer_logprobs(const ChatRequest& prompt,
                                                    std::string_view answer,
                                                    const StudentState* state) {
    (void)prompt, (void)answer, (void)state;
    throw UnsupportedCapabilityError("backend does not serve logprobs");
  }

  virtual double reward(std::string_view question, std::string_view answer) {
    (void)question, (void)answer;
    throw UnsupportedCapabilityError("backend does not serve reward");
  }

  virtual GradientFeatures grad_features(const ChatRequest& prompt,
                                         std::string_view answer,
                                         const StudentState* state) {
    (void)prompt, (void)answer, (void)state;
    throw UnsupportedCapabilityError("backend does not serve grad_embedding");
  }

  // Always trains a fresh adapter on top of the base weights.
  virtual StudentState finetune(const Corpus& train, const Corpus& validation,
                                const FinetuneHyperparams& hp,
                                std::string_view prompt_template,
                                std::uint64_t seed) {
    (void)train, (void)validation, (void)hp, (void)prompt_template, (void)seed;
    throw UnsupportedCapabilityError("backend does not serve finetune");
  }

  virtual StudentState base_state() { return StudentState{}; }
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};
  std::function<void(std::chrono::milliseconds)> sleep =
      [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
};

struct EndpointConfig {
  std::string name;
  std::string base_url;
  std::string model;
  // Name of the environment variable holding the API key; never the key.
  std::string api_key_env;
  double temperature = 0.0;
  int max_output_tokens = 1024;
};

/// Shareable handle binding a backend to a role, its capabilities and the
/// run's budget ledger.
class ModelEndpoint {
 public:
  ModelEndpoint(ModelRole role, std::set<Capability> capabilities,
                Transport transport, std::shared_ptr<ModelBackend> backend,
                std::shared_ptr<BudgetLedger> ledger,
                EndpointConfig config = {}, RetryPolicy retry = {})
      : role_(role),
        capabilities_(std::move(capabilities)),
        transport_(transport),
        backend_(std::move(backend)),
        ledger_(std::move(ledger)),
        config_(std::move(config)),
        retry_(std::move(retry)) {
    if (!backend_) throw ValidationError("endpoint has no backend");
    if (!ledger_) throw ValidationError("endpoint has no budget ledger");
    if (role_ == ModelRole::kReward && !supports(Capability::kReward)) {
      throw ValidationError("reward endpoints must expose the reward capability");
    }
    if (role_ == ModelRole::kStudent &&
        (!supports(Capability::kGenerate) || !supports(Capability::kLogprobs))) {
      throw ValidationError("student endpoints must expose generate and logprobs");
    }
  }

  ModelRole role() const { return role_; }
  Transport transport() const { return transport_; }
  const std::set<Capability>& capabilities() const { return capabilities_; }
  const EndpointConfig& config() const { return config_; }
  ModelBackend& backend() const { return *backend_; }
  BudgetLedger& ledger() const { return *ledger_; }
  const std::shared_ptr<BudgetLedger>& ledger_ptr() const { return ledger_; }
  const RetryPolicy& retry() const { return retry_; }

  bool supports(Capability c) const { return capabilities_.count(c) > 0; }

  void require(Capability c) const {
    if (!supports(c)) {
      throw UnsupportedCapabilityError(std::string(to_string(role_)) +
                                       " endpoint lacks capability " +
                                       std::string(to_string(c)));
    }
  }

 private:
  ModelRole role_;
  std::set<Capability> capabilities_;
  Transport transport_;
  std::shared_ptr<ModelBackend> backend_;
  std::shared_ptr<BudgetLedger> ledger_;
  EndpointConfig config_;
  RetryPolicy retry_;
};

// Whitespace token count; the documented fallback when upstream omits usage.
inline std::int64_t approx_token_count(std::string_view text) {
  return static_cast<std::int64_t>(detail::split_whitespace(text).size());
}

template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  auto backoff = policy.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const TransportError& e) {
      if (!e.retryable || attempt >= policy.max_attempts) throw;
    }
    if (policy.sleep) policy.sleep(backoff);
    backoff = std::min(
        policy.max_backoff,
        std::chrono::milliseconds(static_cast<std::int64_t>(
            static_cast<double>(backoff.count()) * policy.multiplier)));
  }
}

/// Sends a chat request, retrying transient transport failures, and charges
/// the usage to the endpoint's role. A response whose usage would cross the
/// role's cap is discarded with BudgetError.
inline ChatResponse chat(const ModelEndpoint& endpoint,
                         const ChatRequest& request,
                         const StudentState* state = nullptr,
                         const std::string& purpose = "chat") {
  endpoint.require(Capability::kGenerate);
  validate(request);
  endpoint.ledger().ensure_available(endpoint.role());
  ChatResponse response = with_retries(
      endpoint.retry(), [&] { return endpoint.backend().chat(request, state); });
  if (request.want_logprobs) {
    if (!response.token_logprobs) {
      throw ProtocolError("logprobs requested but missing from response");
    }
    for (const auto& t : *response.token_logprobs) {
      if (!(t.logprob <= 0.0)) {
        throw ProtocolError("upstream returned a positive log-probability");
      }
    }
  }
  if (response.usage.input_tokens < 0 || response.usage.output_tokens < 0) {
    throw ProtocolError("upstream returned negative token usage");
  }
  endpoint.ledger().charge(endpoint.role(), response.usage, purpose);
  return response;
}

/// ŷ = f_θ(x) under temperature-0 decoding.
inline std::string student_greedy_generate(const ModelEndpoint& endpoint,
                                           const StudentState& state,
                                           std::string_view prompt) {
  if (endpoint.role() != ModelRole::kStudent) {
    throw ValidationError("student_greedy_generate needs a student endpoint");
  }
  ChatRequest req = ChatRequest::user(std::string(prompt));
  req.temperature = 0.0;
  req.max_output_tokens = endpoint.config().max_output_tokens;
  req.seed = 0;
  return chat(endpoint, req, &state, "student_generate").text;
}

inline std::vector<TokenLogprob> answer_logprobs(const ModelEndpoint& endpoint,
                                                 const StudentState& state,
                                                 std::string_view prompt,
                                                 std::string_view answer) {
  endpoint.require(Capability::kLogprobs);
  endpoint.ledger().ensure_available(endpoint.role());
  const ChatRequest req = ChatRequest::user(std::string(prompt));
  auto lps = with_retries(endpoint.retry(), [&] {
    return endpoint.backend().answer_logprobs(req, answer, &state);
  });
  for (const auto& t : lps) {
    if (!(t.logprob <= 0.0)) {
      throw ProtocolError("backend returned a positive log-probability");
    }
  }
  TokenUsage usage;
  usage.input_tokens = approx_token_count(prompt) + approx_token_count(answer);
  usage.approximate = true;
  endpoint.ledger().charge(endpoint.role(), usage, "student_logprobs");
  return lps;
}

inline GradientFeatures grad_features(const ModelEndpoint& endpoint,
                                      const StudentState& state,
                                      std::string_view prompt,
                                      std::string_view answer) {
  endpoint.require(Capability::kGradEmbedding);
  endpoint.ledger().ensure_available(endpoint.role());
  const ChatRequest req = ChatRequest::user(std::string(prompt));
  auto features = with_retries(endpoint.retry(), [&] {
    return endpoint.backend().grad_features(req, answer, &state);
  });
  TokenUsage usage;
  usage.input_tokens = approx_token_count(prompt) + approx_token_count(answer);
  usage.approximate = true;
  endpoint.ledger().charge(endpoint.role(), usage, "student_grad_embedding");
  return features;
}

/// r(x, y); higher means a better response.
inline double reward_score(const ModelEndpoint& endpoint,
                           std::string_view question,
                           std::string_view answer) {
  if (endpoint.role() != ModelRole::kReward) {
    throw ValidationError("reward_score needs a reward endpoint");
  }
  endpoint.require(Capability::kReward);
  endpoint.ledger().ensure_available(endpoint.role());
  const double r = with_retries(endpoint.retry(), [&] {
    return endpoint.backend().reward(question, answer);
  });
  if (!std::isfinite(r)) throw ProtocolError("reward model returned a non-finite score");
  TokenUsage usage;
  usage.input_tokens = approx_token_count(question) + approx_token_count(answer);
  usage.approximate = true;
  endpoint.ledger().charge(endpoint.role(), usage, "reward");
  return r;
}

/// Fine-tunes a fresh adapter from the base weights and returns the
/// checkpoint with the best validation performance.
inline StudentState student_finetune(const ModelEndpoint& endpoint,
                                     const Corpus& train,
                                     const Corpus& validation,
                                     const FinetuneHyperparams& hp,
                                     std::string_view prompt_template,
                                     std::uint64_t seed) {
  endpoint.require(Capability::kFinetune);
  if (train.empty()) throw ValidationError("fine-tune train corpus is empty");
  validate(hp);
  return endpoint.backend().finetune(train, validation, hp, prompt_template, seed);
}

}  // namespace itersynth::modelio
