#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace swintr {

// Exit codes of every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;  // validation, configuration and data errors
inline constexpr int kExitFailed = 2;   // internal check failures

// Entry point of the command-line tool; args excludes the program name.
// Commands: train, eval, infer, resize-compare, selftest, synth-data, config.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace swintr
