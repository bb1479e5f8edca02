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

#include "itersynth/analysis.hpp"
#include "itersynth/backends.hpp"
#include "itersynth/config.hpp"
#include "itersynth/corpus.hpp"
#include "itersynth/dataset.hpp"
#include "itersynth/engine.hpp"
#include "itersynth/error.hpp"
#include "itersynth/modelio/endpoint.hpp"
#include "itersynth/modelio/http_backend.hpp"
#include "itersynth/modelio/sim.hpp"
#include "itersynth/prompts.hpp"
#include "itersynth/scoring.hpp"
#include "itersynth/selection.hpp"
#include "itersynth/synthgen.hpp"
#include "itersynth/verify.hpp"
