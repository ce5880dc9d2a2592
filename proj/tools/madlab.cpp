#include "madlab/cli.hpp"

int main(int argc, char** argv) { return madlab::cli::run(argc, argv); }
