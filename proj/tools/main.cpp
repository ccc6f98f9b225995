#include "cli.hpp"

int main(int argc, char** argv) { return diffusec::cli::cli_main(argc, argv); }
