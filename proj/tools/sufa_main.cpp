#include "sufa/cli.hpp"

int main(int argc, char** argv) { return sufa::run_cli(argc, argv); }
