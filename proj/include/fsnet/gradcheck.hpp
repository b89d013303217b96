#pragma once

// Central finite-difference verification of every differentiable tape
// operation and of the full plain and adapted TCN backward passes.

#include "fsnet/numerics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fsnet {

struct GradcheckOptions {
    Index trials = 100;
    Real step = 1e-5;
    Real tolerance = 1e-4;  ///< on |analytic - numeric| / max(|analytic|, |numeric|, 1e-6)
    std::uint64_t seed = 1;
};

struct GradcheckCase {
    std::string op;
    Index trials = 0;
    Index failures = 0;
    Index entries = 0;  ///< gradient entries compared over all trials
    Real max_error = 0;
    std::string first_failure;
};

struct GradcheckReport {
    std::vector<GradcheckCase> cases;
    double seconds = 0;

    bool passed() const;
    std::string to_text() const;
};

std::vector<std::string> gradcheck_ops();

/// Runs every op in gradcheck_ops(), `trials` random instances each. Instances
/// whose ReLU inputs come within 1e-3 of the kink are redrawn.
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

} // namespace fsnet
