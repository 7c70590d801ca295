#ifndef DOWNSCALER_ERROR_HPP
#define DOWNSCALER_ERROR_HPP

#include <stdexcept>
#include <string>

namespace downscaler {

// Shape or dimension disagreement between tensors. The message names the
// offending dimension(s).
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad run configuration: unknown key, out-of-range value, unreadable file.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or incompatible data file (dataset, checkpoint, samples).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value where one must not appear (loss, gradient, parameter).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace downscaler

#endif
