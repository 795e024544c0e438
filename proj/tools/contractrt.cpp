#include "contractrt/cli.hpp"

int main(int argc, char** argv) { return contractrt::cli::main_entry(argc, argv); }
