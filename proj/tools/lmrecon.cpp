#include "lmrecon/cli.hpp"

int main(int argc, char** argv) { return lmr::cli::run(argc, argv); }
