#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedsim {

// Exit-code contract: 0 pass, 2 assertion failure, 3 configuration error,
// 4 numeric divergence.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DivergenceError : NumericError {
    DivergenceError(std::size_t round, const std::string& what)
        : NumericError("divergence at round " + std::to_string(round) + ": " + what),
          round(round) {}
    std::size_t round;
};

}  // namespace fedsim
