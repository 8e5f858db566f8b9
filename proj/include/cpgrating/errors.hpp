#pragma once

#include <stdexcept>
#include <string>

namespace cpgrating {

/// Base of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// |omega^2/c^2 - kz^2| vanishes: the E/H polarization basis is undefined.
class DegenerateModeError : public Error {
 public:
  using Error::Error;
};

/// Material model evaluated at a pole (Drude at xi = 0).
class PoleError : public Error {
 public:
  using Error::Error;
};

/// Invalid input or configuration (bad geometry, missing Fourier range, schema violation).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A linear system or propagation step could not be carried out reliably.
class NumericalBreakdown : public Error {
 public:
  using Error::Error;
};

/// A quadrature did not reach the requested tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double achieved)
      : Error(what), achieved_(achieved) {}
  double achieved() const noexcept { return achieved_; }

 private:
  double achieved_;
};

}  // namespace cpgrating
