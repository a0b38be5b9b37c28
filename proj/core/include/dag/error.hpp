#pragma once

#include <stdexcept>
#include <string>

namespace dag {

// A caller broke an operation's precondition (shape mismatch, non-scalar
// root, out-of-range step, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid user input: bad config, unknown vocabulary token, bad schedule.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File system or encoding failure; the message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dag
