#pragma once

#include <string>
#include <vector>

namespace ptshadow::cli {

// Command-line front end. Subcommands: simulate, estimate, compare, sweep,
// werner — each takes --config <file> plus the targeted overrides --m, --p,
// --seed, --out, and --emit-plot-data. Returns the process exit code:
//   0 success, 2 configuration / argument error, 3 data error,
//   4 resource-limit error, 1 anything else.
// Every command is a pure function of (config file, input files): reruns
// write byte-identical outputs, and each run leaves a
// <command>_manifest.json listing every emitted file with a content digest.
int run(int argc, char** argv);

// Same entry point for in-process callers; `args` excludes the program name.
int run(const std::vector<std::string>& args);

} // namespace ptshadow::cli
