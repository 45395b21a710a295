#include "qpi/cli.hpp"

int main(int argc, char** argv) { return qpi::cli::run(argc, argv); }
