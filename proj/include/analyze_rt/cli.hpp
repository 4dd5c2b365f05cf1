#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace analyze_rt {

/// Exit codes: 0 success, 1 task failure, 2 configuration or usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Routes SIGINT/SIGTERM to the cancellation flag so pools drain.
void install_interrupt_handlers();

}  // namespace analyze_rt
