#include <iostream>

#include <bcshf/cli.hpp>

int main(int argc, char** argv) { return bcshf::cli::run(argc, argv, std::cout, std::cerr); }
