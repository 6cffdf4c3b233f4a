#include "detadvprop/cli.hpp"

int main(int argc, char** argv) { return detadv::cli::run_command(argc, argv); }
