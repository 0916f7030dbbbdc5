#pragma once

#include <stdexcept>
#include <string>

namespace m4l {

// Bad or inconsistent input data (files, manifests, graph structure).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values, divergence, singular systems that damping could not fix.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace m4l
