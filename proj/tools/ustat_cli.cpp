#include "ustat/cli.hpp"

int main(int argc, char** argv) { return ustat::cli::run_command_line(argc, argv); }
