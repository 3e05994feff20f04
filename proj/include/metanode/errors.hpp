#pragma once

#include <stdexcept>
#include <string>

namespace metanode {

/// Base class for every error the library raises. `kind()` is the stable,
/// machine-readable class name reported by the CLI.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

#define METANODE_DEFINE_ERROR(Name)                                    \
  class Name : public Error {                                          \
   public:                                                             \
    using Error::Error;                                                \
    const char* kind() const noexcept override { return #Name; }      \
  };

METANODE_DEFINE_ERROR(ShapeError)
METANODE_DEFINE_ERROR(NumericalError)
METANODE_DEFINE_ERROR(DivergenceError)
METANODE_DEFINE_ERROR(LineSearchError)
METANODE_DEFINE_ERROR(SchemaError)
METANODE_DEFINE_ERROR(DataError)
METANODE_DEFINE_ERROR(ConfigError)
METANODE_DEFINE_ERROR(IoError)

#undef METANODE_DEFINE_ERROR

/// Raised when the adaptive solver exhausts its step budget or its step size
/// collapses; carries the time that was reached.
class StiffnessError : public Error {
 public:
  StiffnessError(const std::string& what, double time_reached)
      : Error(what), time_reached_(time_reached) {}
  const char* kind() const noexcept override { return "StiffnessError"; }
  double time_reached() const noexcept { return time_reached_; }

 private:
  double time_reached_;
};

}  // namespace metanode
