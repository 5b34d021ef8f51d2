// SPDX-License-Identifier: Apache-2.0
//
// risloc — RIS-aided near-field localization and velocity estimation toolkit

#pragma once

#include <stdexcept>
#include <string>

namespace risloc {

/// Base class for all recoverable toolkit errors.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

/// Coincident points, zero baselines, or other geometry that has no valid answer.
class DegenerateGeometry : public Error {
  public:
    using Error::Error;
};

/// A model vector collapsed (zero channel vector, zero gain) where the math needs it nonzero.
class DegenerateModel : public Error {
  public:
    using Error::Error;
};

/// A normal matrix that must be invertible (L >= 3 with random profiles) is singular.
class RankDeficient : public Error {
  public:
    using Error::Error;
};

/// Non-finite objective or other numeric breakdown inside an iterative routine.
class NumericalFailure : public Error {
  public:
    using Error::Error;
};

/// Fisher information matrix too ill-conditioned to bound the parameters.
class Unidentifiable : public Error {
  public:
    using Error::Error;
};

/// Config file could not be parsed; message carries the line number.
class ParseError : public Error {
  public:
    using Error::Error;
};

/// Parsed input violates a documented invariant; message names the offender.
class ValidationError : public Error {
  public:
    using Error::Error;
};

} // namespace risloc
