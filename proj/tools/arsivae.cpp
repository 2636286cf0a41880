#include "arsivae/cli.hpp"

int main(int argc, char** argv) { return arsivae::run_cli(argc, argv); }
