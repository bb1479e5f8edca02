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

#include <string>
#include <string_view>

#include "itersynth/error.hpp"

namespace itersynth {

enum class DatasetKind { kGsm8kStyle, kMathCategoryStyle, kProntoStyle, kGame24Backward };

inline std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::kGsm8kStyle: return "gsm8k_style";
    case DatasetKind::kMathCategoryStyle: return "math_category_style";
    case DatasetKind::kProntoStyle: return "pronto_style";
    case DatasetKind::kGame24Backward: return "game24_backward";
  }
  return "gsm8k_style";
}

inline DatasetKind dataset_kind_from_string(std::string_view s) {
  if (s == "gsm8k_style") return DatasetKind::kGsm8kStyle;
  if (s == "math_category_style") return DatasetKind::kMathCategoryStyle;
  if (s == "pronto_style") return DatasetKind::kProntoStyle;
  if (s == "game24_backward") return DatasetKind::kGame24Backward;
  throw ValidationError("unknown dataset kind '" + std::string(s) + "'");
}

// Asset-name prefix of each dataset's prompt files.
inline std::string_view asset_prefix(DatasetKind k) {
  switch (k) {
    case DatasetKind::kGsm8kStyle: return "gsm8k";
    case DatasetKind::kMathCategoryStyle: return "math";
    case DatasetKind::kProntoStyle: return "pronto";
    case DatasetKind::kGame24Backward: return "game24";
  }
  return "gsm8k";
}

}  // namespace itersynth
