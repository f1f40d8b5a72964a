#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rpg {

/// Invalid or inconsistent configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A metric was requested on data that cannot support it (e.g. empty score lists).
class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged; carries the step index and loss component that went non-finite.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t step, std::string component)
      : std::runtime_error("non-finite loss at step " + std::to_string(step) + " in component '" +
                           component + "'"),
        step_(step),
        component_(std::move(component)) {}

  std::size_t step() const noexcept { return step_; }
  const std::string& component() const noexcept { return component_; }

 private:
  std::size_t step_;
  std::string component_;
};

}  // namespace rpg
