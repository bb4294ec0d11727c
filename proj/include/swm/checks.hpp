#pragma once

#include <string>
#include <vector>

#include "swm/tensor.hpp"

namespace swm {

struct CheckReport {
    std::string name;
    real value = 0;      // measured max error
    real threshold = 0;  // pass iff value <= threshold
    bool pass = false;
};

// Reverse-mode vs central-difference checks: every registered primitive
// at 1e-6 and the composed blocks (temporal encoder, injected attention,
// prediction heads, multi-task loss) at 1e-4.
std::vector<CheckReport> run_gradient_checks(int seeds_per_case);

// Chunked-vs-sequential scan equivalence over random instances (S <= 64)
// at 1e-10, plus exact split/concat state carrying in sequential mode.
std::vector<CheckReport> run_scan_checks(int instances);

bool all_pass(const std::vector<CheckReport>& reports);

}  // namespace swm
