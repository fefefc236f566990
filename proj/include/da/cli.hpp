#pragma once

#include <iosfwd>

namespace da::cli {

enum ExitCode { ok = 0, invalid = 1, infeasible = 2 };

// Subcommands: simulate, audit, fairness, classify, solve-transfers.
int main(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace da::cli
