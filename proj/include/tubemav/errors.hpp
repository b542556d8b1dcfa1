#pragma once

#include <stdexcept>
#include <string>

namespace tubemav {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Integration or filtering produced NaN/Inf.
class NonFiniteState : public Error {
 public:
  using Error::Error;
};

// vee() called on a matrix that is not skew-symmetric.
class NotSkew : public Error {
 public:
  using Error::Error;
};

// rotation_to_euler at |R(2,0)| >= 1 - 1e-9.
class GimbalLock : public Error {
 public:
  using Error::Error;
};

// Fixed-point iteration hit its cap without meeting tolerance.
class NoConvergence : public Error {
 public:
  using Error::Error;
};

// Riccati residual stalled above tolerance.
class NotStabilizable : public Error {
 public:
  using Error::Error;
};

// Constraint tightening produced lo > hi in some dimension.
class EmptyTightenedSet : public Error {
 public:
  using Error::Error;
};

// QP has no feasible point; message names the violated constraint.
class Infeasible : public Error {
 public:
  using Error::Error;
};

// QP iteration limit reached.
class MaxIter : public Error {
 public:
  using Error::Error;
};

// Monte-Carlo tube rollout diverged (closed loop not stable).
class Divergence : public Error {
 public:
  using Error::Error;
};

// Vector or matrix size does not match the declared contract.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// Training loss became NaN/Inf.
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

// File could not be read or written.
class Io : public Error {
 public:
  using Error::Error;
};

// File header does not carry the expected format version.
class FormatVersionMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace tubemav
