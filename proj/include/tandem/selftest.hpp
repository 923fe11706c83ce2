#pragma once

#include <string>
#include <vector>

namespace tandem {

struct SelftestResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Fast fixed-answer fixtures across all modules (no training runs).
std::vector<SelftestResult> run_selftest();

}  // namespace tandem
