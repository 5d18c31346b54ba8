#include "dicex_cli.hpp"

int main(int argc, char** argv) { return dicex::cli::run_cli(argc, argv); }
