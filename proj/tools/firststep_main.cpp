#include "firststep/cli.hpp"

int main(int argc, char** argv) { return firststep::cli::run_main(argc, argv); }
