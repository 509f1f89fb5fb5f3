#pragma once

#include <stdexcept>
#include <string>

namespace lrs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A linear system (least squares, structured U solve) has no unique solution.
class SingularSystem : public Error {
public:
  using Error::Error;
};

class RankDeficient : public Error {
public:
  using Error::Error;
};

/// The moment matrix does not determine a unique top-r subspace.
class DegenerateMoment : public Error {
public:
  using Error::Error;
};

class DomainError : public Error {
public:
  using Error::Error;
};

class InfeasibleSparsity : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

/// Malformed dataset, model, or config file. The message carries the location.
class FormatError : public Error {
public:
  using Error::Error;
};

class PrivacyBudgetMismatch : public Error {
public:
  using Error::Error;
};

} // namespace lrs
