#include "restyle/cli.hpp"

int main(int argc, char** argv) { return restyle::cli::run(argc, argv); }
