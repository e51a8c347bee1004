#pragma once

#include <stdexcept>
#include <string>

namespace gpra {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error {
public:
    explicit NotPositiveDefinite(const std::string &what) : Error("not positive definite: " + what) {}
};

class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string &what) : Error("dimension mismatch: " + what) {}
};

class InvalidExponent : public Error {
public:
    explicit InvalidExponent(const std::string &what) : Error("invalid exponent: " + what) {}
};

class OutOfRange : public Error {
public:
    explicit OutOfRange(const std::string &what) : Error("out of range: " + what) {}
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string &what) : Error("invalid argument: " + what) {}
};

class FitFailed : public Error {
public:
    explicit FitFailed(const std::string &what) : Error("GPR fit failed: " + what) {}
};

class DimensionTooLarge : public Error {
public:
    explicit DimensionTooLarge(const std::string &what) : Error("dimension too large: " + what) {}
};

class TreeTooDeep : public Error {
public:
    explicit TreeTooDeep(const std::string &what) : Error("tree too deep: " + what) {}
};

class ConfigInvalid : public Error {
public:
    explicit ConfigInvalid(const std::string &what) : Error("invalid config: " + what) {}
};

}  // namespace gpra
