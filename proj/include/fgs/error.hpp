// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fgs {

/// Base class for every error raised by the engine. The CLI maps the concrete
/// type onto a process exit code.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bad arguments, shape mismatches, malformed files.
class InvalidInput : public Error {
  public:
    using Error::Error;
};

/// A reduction had nothing to reduce over (no valid pixels, no overlap).
class EmptyInput : public InvalidInput {
  public:
    using InvalidInput::InvalidInput;
};

/// Fewer candidate points than requested by an initialization step.
class InsufficientPoints : public InvalidInput {
  public:
    using InvalidInput::InvalidInput;
};

/// Singular matrices, non-finite network outputs.
class NumericalDegeneracy : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

} // namespace fgs
