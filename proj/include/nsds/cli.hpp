#pragma once

#include <iosfwd>

namespace nsds::cli {

// Subcommands: score, allocate, compare, quantize, synth. Returns the process
// exit code; failures print one "ERROR <code> <module>: <message>" line to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nsds::cli
