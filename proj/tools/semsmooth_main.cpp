#include "semsmooth/commands.hpp"

int main(int argc, char** argv) { return semsmooth::run_cli(argc, argv); }
