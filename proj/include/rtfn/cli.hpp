#ifndef RTFN_CLI_HPP
#define RTFN_CLI_HPP

namespace rtfn {

// Entry point behind tools/rtfn. Subcommands: train, cluster, evaluate,
// reproduce-tables, gradcheck. Returns the process exit code; data/config
// errors print one machine-parsable line on stderr and return nonzero.
int run_cli(int argc, const char* const* argv);

}  // namespace rtfn

#endif
