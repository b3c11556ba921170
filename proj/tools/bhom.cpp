#include "bhom/cli.hpp"

int main(int argc, char** argv) { return bhom::cli::run_cli(argc, argv); }
