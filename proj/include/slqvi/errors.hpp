#pragma once

#include <stdexcept>
#include <string>

namespace slqvi {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible shapes, non-triangular vecs lengths, empty vectors.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A positive-definiteness requirement failed, e.g. R + D^T P D.
class SingularityError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double final_residual)
        : Error(what), final_residual_(final_residual) {}
    double final_residual() const noexcept { return final_residual_; }

private:
    double final_residual_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Data matrix fails the full-column-rank condition.
class RankError : public Error {
public:
    using Error::Error;
};

class UnstableGainError : public Error {
public:
    using Error::Error;
};

}  // namespace slqvi
