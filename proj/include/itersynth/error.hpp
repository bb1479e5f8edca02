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

#include <stdexcept>
#include <string>
#include <string_view>

namespace itersynth {

// Broad failure classes. The CLI maps kValidation/kParse/kTemplate/kIo/
// kIntegrity/kExtraction/kJudgeParse/kDegenerate to exit code 1 and the
// runtime classes (transport, budget, protocol, capability) to exit code 2.
enum class ErrorKind {
  kValidation,
  kParse,
  kIo,
  kTemplate,
  kExtraction,
  kJudgeParse,
  kDegenerateInput,
  kIntegrity,
  kTransport,
  kBudget,
  kProtocol,
  kUnsupportedCapability,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kTemplate: return "template";
    case ErrorKind::kExtraction: return "extraction";
    case ErrorKind::kJudgeParse: return "judge_parse";
    case ErrorKind::kDegenerateInput: return "degenerate_input";
    case ErrorKind::kIntegrity: return "integrity";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kBudget: return "budget";
    case ErrorKind::kProtocol: return "protocol";
    case ErrorKind::kUnsupportedCapability: return "unsupported_capability";
  }
  return "unknown";
}

inline bool is_runtime_failure(ErrorKind kind) {
  return kind == ErrorKind::kTransport || kind == ErrorKind::kBudget ||
         kind == ErrorKind::kProtocol ||
         kind == ErrorKind::kUnsupportedCapability;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& m)
      : Error(ErrorKind::kValidation, m) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error(ErrorKind::kParse, m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorKind::kIo, m) {}
};

struct TemplateError : Error {
  explicit TemplateError(const std::string& m)
      : Error(ErrorKind::kTemplate, m) {}
};

struct ExtractionError : Error {
  explicit ExtractionError(const std::string& m)
      : Error(ErrorKind::kExtraction, m) {}
};

// Carries the last raw judge completion so callers can log it.
struct JudgeParseError : Error {
  JudgeParseError(const std::string& m, std::string raw)
      : Error(ErrorKind::kJudgeParse, m), raw_text(std::move(raw)) {}
  std::string raw_text;
};

struct DegenerateInputError : Error {
  explicit DegenerateInputError(const std::string& m)
      : Error(ErrorKind::kDegenerateInput, m) {}
};

struct IntegrityError : Error {
  explicit IntegrityError(const std::string& m)
      : Error(ErrorKind::kIntegrity, m) {}
};

struct TransportError : Error {
  TransportError(const std::string& m, bool retryable_)
      : Error(ErrorKind::kTransport, m), retryable(retryable_) {}
  bool retryable;
};

struct BudgetError : Error {
  explicit BudgetError(const std::string& m) : Error(ErrorKind::kBudget, m) {}
};

struct ProtocolError : Error {
  explicit ProtocolError(const std::string& m)
      : Error(ErrorKind::kProtocol, m) {}
};

struct UnsupportedCapabilityError : Error {
  explicit UnsupportedCapabilityError(const std::string& m)
      : Error(ErrorKind::kUnsupportedCapability, m) {}
};

}  // namespace itersynth
