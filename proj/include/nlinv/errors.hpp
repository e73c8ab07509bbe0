#pragma once

#include <stdexcept>
#include <string>

namespace nlinv {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// domain
class ObstacleTooClose : public Error {
 public:
  using Error::Error;
};
class EmptyPatch : public Error {
 public:
  using Error::Error;
};

// elliptic
class NoConvergence : public Error {
 public:
  using Error::Error;
};
class SingularSystem : public Error {
 public:
  using Error::Error;
};

// semilinear
class NewtonDiverged : public Error {
 public:
  using Error::Error;
};

// harmonic
class ZeroFrequency : public Error {
 public:
  using Error::Error;
};
class OutsideNeighborhood : public Error {
 public:
  using Error::Error;
};
class OverflowGuard : public Error {
 public:
  using Error::Error;
};

// linearize
class StencilInconsistent : public Error {
 public:
  using Error::Error;
};

// inverse
class SupportViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace nlinv
