#pragma once

#include <stdexcept>
#include <string>

namespace salattack {

// Precondition violations on caller-supplied values (shapes, ranges, sizes).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Unreadable or malformed files and containers.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by predict() when the query ledger has no budget left. Attacks
// absorb it and return the best state found so far.
class BudgetExhausted : public std::runtime_error {
 public:
  BudgetExhausted() : std::runtime_error("query budget exhausted") {}
};

// Remote classifier failure after all retries.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace salattack
