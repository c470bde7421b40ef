#pragma once

#include <stdexcept>
#include <string>

namespace lqg {

// Base class for all library errors.
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// A numeric parameter is outside its valid range. Carries the offending
// key name and the expected range so callers (the CLI in particular) can
// surface them verbatim.
struct parameter_error : error {
    std::string key;
    std::string range;
    parameter_error(std::string key_, std::string range_, const std::string& msg)
        : error(msg), key(std::move(key_)), range(std::move(range_)) {}
};

// Grid spacing too coarse for the requested scale.
struct resolution_error : error {
    using error::error;
};

// A query point, circle or annulus leaves the sampled window.
struct out_of_domain_error : error {
    using error::error;
};

// Mismatched grid dimensions.
struct shape_error : error {
    using error::error;
};

// A stated precondition does not hold (e.g. initial scale too large for a
// cluster tree, source outside the query region).
struct precondition_error : error {
    using error::error;
};

// Degenerate geometric input (duplicate points and the like).
struct degenerate_input_error : error {
    using error::error;
};

// Graph-structure problems (disconnected adjacency, degenerate boundary).
struct topology_error : error {
    using error::error;
};

// Configuration file / key problems.
struct config_error : error {
    std::string key;
    config_error(std::string key_, const std::string& msg) : error(msg), key(std::move(key_)) {}
};

}
