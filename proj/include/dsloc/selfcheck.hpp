#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dsloc/types.hpp"

namespace dsloc::selfcheck {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Five-node validation graph: a triangle, a strongly attached fourth node
/// and a weakly attached fifth node (all of its edges weigh 1).
AffinityMatrix outlier_example_graph(const std::array<double, 3>& triangle = {20, 21, 22},
                                     const std::array<double, 3>& attachment = {30, 35, 41});

// One routine per advertised guarantee; the acceptance binary and the CLI
// `verify` subcommand print one line per result.
CheckResult check_worked_example();
CheckResult check_oracle_equivalence(int instances = 500);
CheckResult check_solver_cross_agreement(int instances = 100);
CheckResult check_homogenization_identity(int instances = 1000);
CheckResult check_query_containment(int instances = 1000);
CheckResult check_selection_rules(int instances = 1000);
CheckResult check_planted_recovery();
CheckResult check_determinism();

std::vector<CheckResult> run_all(bool quick = false);

}  // namespace dsloc::selfcheck
