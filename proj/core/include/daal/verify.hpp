#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "daal/config.hpp"

namespace daal::verify {

struct CriterionResult {
    int index = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

struct Options {
    bool skip_slow = false; // skips the adaptation study (criteria 6 and 7)
    int only = 0;           // run a single criterion (1..8); 0 = all
    std::ostream* progress = nullptr;
};

/// Runs the acceptance suite: oracle equivalences, the gradient checks,
/// metric properties, mask oracle, degenerate-weight equivalence, the
/// directional adaptation study, ratio retention, and reproducibility.
/// Prints one pass/fail line per criterion to options.progress.
std::vector<CriterionResult> run_acceptance(const Options& options);

bool all_passed(const std::vector<CriterionResult>& results);

/// Training profile used by the adaptation-study criteria: the default
/// synthetic shift with a budget that fits a single CPU core.
cli::RunConfig acceptance_train_profile();

} // namespace daal::verify
