#pragma once

#include <stdexcept>
#include <string>

namespace weedout {

// Root of every error raised by the library. Callers that only need to
// report failures can catch this; tests catch the concrete kinds.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class MaskMismatch : public Error {
public:
    using Error::Error;
};

class SpecError : public Error {
public:
    using Error::Error;
};

class InfeasibleSparsity : public Error {
public:
    InfeasibleSparsity(std::size_t layer, const std::string& what)
        : Error(what), layer_(layer) {}
    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

class UnsupportedMode : public Error {
public:
    using Error::Error;
};

class NotImplemented : public Error {
public:
    using Error::Error;
};

class EvaluationIncomplete : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    FormatError(std::size_t offset, const std::string& what)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class ChecksumError : public Error {
public:
    using Error::Error;
};

// Non-finite values escaped a numeric kernel (diverged training, bad input).
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace weedout
