// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace uniat {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or model dimensions.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed inputs: configs, manifests, checkpoints, protocol feasibility.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf or failed numerical checks.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Bad command-line usage.
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace uniat
