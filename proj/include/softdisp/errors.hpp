#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace softdisp {

/// Base class for all toolkit errors.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or out-of-contract input (bad shapes, non-finite costs, bad flags).
struct invalid_input_error : error {
    using error::error;
};

/// Structurally valid input that makes the requested quantity undefined
/// (empty mask, single-hypothesis PER, too-short fit window).
struct degenerate_input_error : error {
    using error::error;
};

/// Byte-level codec failure (bad magic, truncated payload, wrong variant).
struct format_error : error {
    using error::error;
};

/// Gradient flow produced a non-finite loss; carries the offending step.
struct divergence_error : error {
    std::size_t step;
    divergence_error(const std::string& msg, std::size_t step_index)
        : error(msg), step(step_index) {}
};

/// Finite-difference check point lies too close to a kink or argmax tie;
/// the caller should draw a new sample.
struct resample_error : error {
    using error::error;
};

}  // namespace softdisp
