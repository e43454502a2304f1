#pragma once

// Subcommand registration for the mvrestore CLI.  Each register_* call adds
// one subcommand (flags + callback) to the app; the callbacks throw mvr
// exceptions on failure, which main converts to the single-line
// `error: <message>` convention with a nonzero exit.

#include <CLI11.hpp>

namespace mvr::cli {

void register_synth(CLI::App& app);

}  // namespace mvr::cli
