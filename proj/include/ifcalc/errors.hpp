#pragma once

#include <stdexcept>
#include <string>

namespace ifcalc {

// Root of every library error. Each subclass maps to one failure family.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed arguments: non-finite entries, bad shapes, out-of-range scalars.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Rank deficiency that prevents identification of a parameter.
class IdentificationError : public Error {
 public:
  using Error::Error;
};

// The model lacks the block structure an operation needs.
class StructureError : public Error {
 public:
  using Error::Error;
};

// Conditioning on a zero-mass value, or a support point where f is not finite.
class DomainError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class DependencyError : public Error {
 public:
  using Error::Error;
};

// Certification of a constructed object failed.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

class SupportError : public Error {
 public:
  using Error::Error;
};

// The finite-difference oracle could not evaluate the functional.
class OracleError : public Error {
 public:
  using Error::Error;
};

}  // namespace ifcalc
