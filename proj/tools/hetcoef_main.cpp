#include "hetcoef/cli.hpp"

int main(int argc, char** argv) { return hetcoef::cli::run_cli(argc, argv); }
