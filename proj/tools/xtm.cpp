#include "xtm/cli.hpp"

int main(int argc, char** argv) { return xtm::cli::run(argc, argv); }
