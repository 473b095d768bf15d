#include "negmem/cli.hpp"

int main(int argc, char** argv) { return negmem::run_cli(argc, argv); }
