#include "capfirm/cli.hpp"

int main(int argc, char** argv) { return capfirm::cli::run_cli(argc, argv); }
