#include "unprm/cli.hpp"

int main(int argc, char** argv) { return unprm::run_cli(argc, argv); }
