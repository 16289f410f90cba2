#pragma once

#include <stdexcept>
#include <string>

namespace illumreid {

// Bad input: out-of-range parameters, shape mismatches, malformed files.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, int epoch)
      : TrainingDiverged(epoch, what + " (diverged at epoch " + std::to_string(epoch) + ")") {}
  int epoch() const { return epoch_; }
  // Same error with `context` prepended to the message.
  TrainingDiverged with_context(const std::string& context) const {
    return TrainingDiverged(epoch_, context + what());
  }

 private:
  TrainingDiverged(int epoch, const std::string& message)
      : std::runtime_error(message), epoch_(epoch) {}
  int epoch_;
};

// A stage checkpoint exists but was produced from a different configuration.
class StaleCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace illumreid
