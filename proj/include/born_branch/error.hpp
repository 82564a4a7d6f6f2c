// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace born {

enum class ErrorKind {
  InvalidSpec,
  DegenerateSpec,
  WrongArity,
  OutOfRange,
  TooLarge,
  StateExplosion,
  BadStart,
  BadStep,
  ZeroDenominator,
  RareEvent,
  DomainError,
  TooFewSurvivors,
  DivergentRegime,
  Extinction,
  DegenerateDesign,
  EmptySample,
  ConfigError,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::DegenerateSpec: return "DegenerateSpec";
    case ErrorKind::WrongArity: return "WrongArity";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::StateExplosion: return "StateExplosion";
    case ErrorKind::BadStart: return "BadStart";
    case ErrorKind::BadStep: return "BadStep";
    case ErrorKind::ZeroDenominator: return "ZeroDenominator";
    case ErrorKind::RareEvent: return "RareEvent";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::TooFewSurvivors: return "TooFewSurvivors";
    case ErrorKind::DivergentRegime: return "DivergentRegime";
    case ErrorKind::Extinction: return "Extinction";
    case ErrorKind::DegenerateDesign: return "DegenerateDesign";
    case ErrorKind::EmptySample: return "EmptySample";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Typed failure raised by every module; `kind()` is stable for callers that branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace born
