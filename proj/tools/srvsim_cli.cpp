#include "srvsim/cli.hpp"

int main(int argc, char** argv) { return srvsim::cli::main(argc, argv); }
