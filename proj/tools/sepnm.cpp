#include "sepnm/cli.hpp"

int main(int argc, char** argv) { return sepnm::cli::main(argc, argv); }
