#include <iostream>
#include <string>
#include <vector>

#include "tandem/cli.hpp"

int main(int argc, char** argv) {
    return tandem::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
