#include "sdf3d/cli.hpp"

int main(int argc, char** argv) { return sdf3d::run_cli(argc, argv); }
