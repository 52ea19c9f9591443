#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "gec/checkpoint.hpp"

namespace gec {

/// Loss became non-finite. Carries the last checkpoint known to be good.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::optional<Checkpoint> last_good = std::nullopt)
      : std::runtime_error(what), last_good_(std::move(last_good)) {}
  const std::optional<Checkpoint>& last_good() const { return last_good_; }

 private:
  std::optional<Checkpoint> last_good_;
};

/// Invalid configuration or unusable inputs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gec
