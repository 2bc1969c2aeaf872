#include "pft/commands.hpp"

int main(int argc, char** argv) { return pft::run_cli(argc, argv); }
