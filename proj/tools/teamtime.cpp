#include <teamtime/cli.hpp>

int main(int argc, char** argv) { return teamtime::cli::run_command(argc, argv); }
