#pragma once

#include <stdexcept>
#include <string>

namespace dcssl {

/// Malformed or invariant-violating input data. `row` is the 1-based data
/// row in the source file (0 when the error is not tied to a row).
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t row = 0)
      : std::runtime_error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Argument outside the domain of a mathematical function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An estimation stage failed to produce a usable fit.
class FitError : public std::runtime_error {
 public:
  FitError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace dcssl
