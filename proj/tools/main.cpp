#include "rtfn/cli.hpp"

int main(int argc, char** argv) { return rtfn::run_cli(argc, argv); }
