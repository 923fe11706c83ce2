#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tandem/training.hpp"

namespace tandem {

/// Exit codes: 0 success, 1 validation failure (bad data, bad config, a
/// failing check), 2 usage or I/O error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;

/// Runs one tandemseg command; args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Labelled cases of a directory holding <id>_image.segv / <id>_label.segv
/// pairs, sorted by id. Throws IoError for a missing directory, an image
/// without labels, or a directory with no cases.
std::vector<Case> load_cases(const std::string& dir);

}  // namespace tandem
