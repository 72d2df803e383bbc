#include "lics/cli.hpp"

int main(int argc, char** argv) { return lics::run_cli(argc, argv); }
