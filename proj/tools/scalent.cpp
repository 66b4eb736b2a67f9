#include "scalent/cli.hpp"

int main(int argc, char** argv) { return scalent::cli::run(argc, argv); }
