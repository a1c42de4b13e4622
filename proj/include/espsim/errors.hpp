#pragma once

#include <stdexcept>
#include <string>

namespace espsim {

// Invalid configuration or mismatched shapes detected before work starts.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An operation was called in a state that its contract forbids, e.g.
// stepping a finished episode.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN/Inf in a loss or parameter vector.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pipeline stage needs an artifact that has not been produced yet.
class MissingArtifact : public std::runtime_error {
 public:
  MissingArtifact(const std::string& what, std::string stage)
      : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace espsim
