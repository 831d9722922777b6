#pragma once

#include <stdexcept>
#include <string>

namespace qfd {

/// Process exit statuses reported by the command-line driver.
enum class ExitStatus : int {
  ok = 0,
  config_error = 1,
  numerical_divergence = 2,
  non_convergence = 3,
  transport_failure = 4,
};

class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual ExitStatus status() const noexcept = 0;
};

/// Invalid parameters, malformed files, unsatisfiable preconditions.
class ConfigError : public Error {
public:
  using Error::Error;
  ExitStatus status() const noexcept override { return ExitStatus::config_error; }
};

/// Wavefunction/potential file could not be decoded.
class FormatError : public ConfigError {
public:
  using ConfigError::ConfigError;
};

/// 1 + (dtau/2) V vanished at a site.
class CoefficientSingularity : public ConfigError {
public:
  CoefficientSingularity(const std::string& what, int i, int j, int k)
      : ConfigError(what), i_(i), j_(j), k_(k) {}
  int i() const noexcept { return i_; }
  int j() const noexcept { return j_; }
  int k() const noexcept { return k_; }

private:
  int i_, j_, k_;
};

class NumericalDivergence : public Error {
public:
  using Error::Error;
  ExitStatus status() const noexcept override { return ExitStatus::numerical_divergence; }
};

/// A field whose norm vanished where a nonzero one is required.
class ZeroNorm : public NumericalDivergence {
public:
  using NumericalDivergence::NumericalDivergence;
};

/// Projection removed (numerically) everything from a snapshot.
class DegenerateSnapshot : public NumericalDivergence {
public:
  using NumericalDivergence::NumericalDivergence;
};

class NonConvergence : public Error {
public:
  using Error::Error;
  ExitStatus status() const noexcept override { return ExitStatus::non_convergence; }
};

class TransportError : public Error {
public:
  using Error::Error;
  ExitStatus status() const noexcept override { return ExitStatus::transport_failure; }
};

/// Peers disagree on the step they are executing.
class ProtocolError : public TransportError {
public:
  using TransportError::TransportError;
};

} // namespace qfd
