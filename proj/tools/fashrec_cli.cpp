#include "fashrec/cli.hpp"

int main(int argc, char** argv) { return fashrec::run_command(argc, argv); }
