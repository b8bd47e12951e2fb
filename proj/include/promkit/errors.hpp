#pragma once

#include <stdexcept>
#include <string>

namespace promkit {

enum class ErrorKind {
  DegenerateEncoding,
  UnsupportedGeometry,
  NoFiniteRange,
  SingularPair,
  MaskedVoxel,
  DegenerateCovariance,
  UndefinedSimilarity,
  NonIdentifiable,
  InfeasibleDesign,
  TrialBudget,
  Validation,
  Io,
};

const char* to_string(ErrorKind kind);

/// Base exception for every failure raised by the library. `kind()` lets the
/// CLI map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace promkit
