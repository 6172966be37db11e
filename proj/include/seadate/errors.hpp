#pragma once

#include <stdexcept>

namespace seadate {

/// Invalid configuration (bad divisibility, out-of-range hyperparameter, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite values or other numerical breakdown during training/checking.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace seadate
