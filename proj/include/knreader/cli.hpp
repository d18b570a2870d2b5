#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace knreader::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // data, I/O or model errors
inline constexpr int kExitUsage = 2;    // unknown subcommand or flag, invalid flag value

// `args` excludes the program name. Subcommands: ingest-kb, retrieve, train,
// eval, ablate, ensemble, trace, render, stats, gradcheck, synth-data.
// Environment: KNREADER_CACHE_DIR enables the on-disk retrieval cache.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace knreader::cli
