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

#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "itersynth/error.hpp"

namespace itersynth::modelio {

enum class LrSchedule { kLinear, kCosineToMin };

inline std::string_view to_string(LrSchedule s) {
  return s == LrSchedule::kLinear ? "linear" : "cosine_to_min";
}

inline LrSchedule lr_schedule_from_string(std::string_view s) {
  if (s == "linear") return LrSchedule::kLinear;
  if (s == "cosine_to_min" || s == "cosine") return LrSchedule::kCosineToMin;
  throw ValidationError("unknown learning-rate schedule '" + std::string(s) + "'");
}

/// Adapter fine-tuning settings forwarded to the student backend. Defaults
/// are the shared optimizer settings; rank, learning rate and epochs come
/// from a per-dataset preset.
struct FinetuneHyperparams {
  int adapter_rank = 32;
  double learning_rate = 1e-4;
  int epochs = 10;
  int batch_size = 24;
  int grad_accum_steps = 2;
  double grad_norm_clip = 2.0;
  double warmup_fraction = 0.15;
  LrSchedule schedule = LrSchedule::kLinear;
  double min_lr = 1e-9;

  bool operator==(const FinetuneHyperparams&) const = default;
};

inline void validate(const FinetuneHyperparams& hp) {
  if (hp.adapter_rank <= 0 || !(hp.learning_rate > 0) || hp.epochs <= 0 ||
      hp.batch_size <= 0 || hp.grad_accum_steps <= 0 ||
      !(hp.grad_norm_clip > 0) || !(hp.min_lr > 0)) {
    throw ValidationError("fine-tune hyperparameters must all be positive");
  }
  if (!(hp.warmup_fraction >= 0.0 && hp.warmup_fraction <= 1.0)) {
    throw ValidationError("warmup_fraction must lie in [0, 1]");
  }
}

// Tuned LoRA settings per (dataset, data kind).
inline const std::map<std::string, FinetuneHyperparams, std::less<>>&
finetune_presets() {
  static const auto* presets = [] {
    auto* m = new std::map<std::string, FinetuneHyperparams, std::less<>>();
    auto make = [](int rank, double lr, int epochs,
                   LrSchedule schedule = LrSchedule::kLinear) {
      FinetuneHyperparams hp;
      hp.adapter_rank = rank;
      hp.learning_rate = lr;
      hp.epochs = epochs;
      hp.schedule = schedule;
      return hp;
    };
    (*m)["gsm8k_seed"] = make(32, 1e-4, 10);
    (*m)["math13_seed"] = make(32, 1e-6, 13);
    (*m)["prontoqa_seed"] = make(32, 1e-5, 13);
    (*m)["game24_seed"] = make(16, 1e-5, 13, LrSchedule::kCosineToMin);
    (*m)["gsm8k_synthetic"] = make(32, 1e-4, 10);
    (*m)["math13_synthetic"] = make(64, 1e-4, 13);
    (*m)["prontoqa_synthetic"] = make(32, 1e-5, 13);
    (*m)["game24_synthetic"] = make(16, 5e-4, 30, LrSchedule::kCosineToMin);
    return m;
  }();
  return *presets;
}

inline FinetuneHyperparams finetune_preset(std::string_view name) {
  const auto& presets = finetune_presets();
  auto it = presets.find(name);
  if (it == presets.end()) {
    throw ValidationError("unknown fine-tune preset '" + std::string(name) + "'");
  }
  return it->second;
}

inline nlohmann::ordered_json to_json(const FinetuneHyperparams& hp) {
  nlohmann::ordered_json j;
  j["adapter_rank"] = hp.adapter_rank;
  j["learning_rate"] = hp.learning_rate;
  j["epochs"] = hp.epochs;
  j["batch_size"] = hp.batch_size;
  j["grad_accum_steps"] = hp.grad_accum_steps;
  j["grad_norm_clip"] = hp.grad_norm_clip;
  j["warmup_fraction"] = hp.warmup_fraction;
  j["schedule"] = std::string(to_string(hp.schedule));
  j["min_lr"] = hp.min_lr;
  return j;
}

}  // namespace itersynth::modelio
