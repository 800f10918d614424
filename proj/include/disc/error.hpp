#pragma once

#include <stdexcept>
#include <string>

namespace disc {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Mismatched or otherwise invalid tensor shapes.
class ShapeError : public Error {
   public:
    using Error::Error;
};

/// NaN or Inf produced by an operation.
class NumericError : public Error {
   public:
    using Error::Error;
};

/// Invalid hyperparameter or configuration value.
class ConfigError : public Error {
   public:
    using Error::Error;
};

/// Malformed input file.
class ParseError : public Error {
   public:
    using Error::Error;
};

/// Misuse of the autograd graph (non-scalar loss, double backward).
class GraphError : public Error {
   public:
    using Error::Error;
};

}  // namespace disc
