#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pmx {

/// Outcome of one verification.  `bound` is the contract the measurement was
/// held against; `at_most` records the honored direction (false for mutation
/// traps, where a deliberately corrupted operator must fail loudly).
struct CheckResult {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double bound = 0.0;
    bool at_most = true;
    std::string detail;  ///< context (counts, timings, per-piece values)
};

/// Deterministic library-level verification suite: source decomposition
/// identities, static continuity closure with its spin-orbit mutation trap,
/// 1/c^2 scaling of every correction, the Poisson solver contracts,
/// hermiticity and the energy imaginary residue, bound-charge neutrality, and
/// the one-step norm-drift order.  Runs in well under five minutes; progress
/// lines go to `progress` when given.
std::vector<CheckResult> run_check_suite(std::ostream* progress = nullptr);

/// One PASS/FAIL line per result with the measured value and its bound.
/// Returns true when every check passed.
bool report_checks(const std::vector<CheckResult>& results, std::ostream& os);

}  // namespace pmx
