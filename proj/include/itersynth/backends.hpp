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

#include <functional>
#include <memory>

#include "itersynth/config.hpp"
#include "itersynth/modelio/endpoint.hpp"
#include "itersynth/modelio/http_backend.hpp"
#include "itersynth/modelio/sim.hpp"

namespace itersynth {

namespace engine {

/// Endpoints for one replicate. Teacher, student and reward share `ledger`;
/// the evaluation judge has its own so it never counts as generation cost.
struct Endpoints {
  std::shared_ptr<modelio::BudgetLedger> ledger;
  std::shared_ptr<modelio::BudgetLedger> judge_ledger;
  std::shared_ptr<modelio::ModelEndpoint> teacher;
  std::shared_ptr<modelio::ModelEndpoint> student;
  std::shared_ptr<modelio::ModelEndpoint> reward;
  std::shared_ptr<modelio::ModelEndpoint> judge;
};

using EndpointFactory = std::function<Endpoints(const RunConfig&)>;

}  // namespace engine

namespace detail_backends {

inline std::shared_ptr<modelio::ModelBackend> make_backend(const EndpointSpec& spec,
                                                           modelio::ModelRole role,
                                                           const modelio::sim::SimWorld& world) {
  if (spec.transport == modelio::Transport::kRemote) {
    auto b = std::make_shared<modelio::HttpBackend>(spec.config, spec.timeout_seconds);
    // Hosted chat APIs have no /health; only worker extensions are probed.
    using modelio::Capability;
    if (spec.capabilities.count(Capability::kGradEmbedding) ||
        spec.capabilities.count(Capability::kFinetune) || spec.capabilities.count(Capability::kReward)) {
      b->require_capabilities(spec.capabilities);
    }
    return b;
  }
  switch (role) {
    case modelio::ModelRole::kTeacher: return std::make_shared<modelio::sim::SimTeacherBackend>(world);
    case modelio::ModelRole::kStudent: return std::make_shared<modelio::sim::SimStudentBackend>(world);
    case modelio::ModelRole::kReward: return std::make_shared<modelio::sim::SimRewardBackend>(world);
  }
  throw ValidationError("unknown model role");
}

inline std::shared_ptr<modelio::ModelEndpoint> make_endpoint(
    const EndpointSpec& spec, modelio::ModelRole role, const modelio::sim::SimWorld& world,
    std::shared_ptr<modelio::BudgetLedger> ledger) {
  return std::make_shared<modelio::ModelEndpoint>(role, spec.capabilities, spec.transport,
                                                  make_backend(spec, role, world),
                                                  std::move(ledger), spec.config);
}

}  // namespace detail_backends

/// Builds fresh endpoints (and ledgers) for one replicate from the config.
inline engine::Endpoints make_endpoints(const RunConfig& c) {
  using modelio::ModelRole;
  const modelio::sim::SimWorld world(c.sim);
  engine::Endpoints ep;
  ep.ledger = std::make_shared<modelio::BudgetLedger>();
  ep.judge_ledger = std::make_shared<modelio::BudgetLedger>();
  ep.ledger->set_cap(ModelRole::kTeacher, c.budget.teacher);
  ep.ledger->set_cap(ModelRole::kStudent, c.budget.student);
  ep.ledger->set_cap(ModelRole::kReward, c.budget.reward);
  ep.teacher = detail_backends::make_endpoint(c.teacher, ModelRole::kTeacher, world, ep.ledger);
  ep.student = detail_backends::make_endpoint(c.student, ModelRole::kStudent, world, ep.ledger);
  if (c.reward.enabled) {
    ep.reward = detail_backends::make_endpoint(c.reward, ModelRole::kReward, world, ep.ledger);
  }
  if (c.judge.enabled) {
    ep.judge = detail_backends::make_endpoint(c.judge, ModelRole::kTeacher, world, ep.judge_ledger);
  }
  return ep;
}

namespace engine {
inline EndpointFactory default_endpoint_factory() { return &make_endpoints; }
}  // namespace engine

}  // namespace itersynth
