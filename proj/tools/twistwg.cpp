#include <iostream>
#include <string>
#include <vector>

#include "twistwg/cli.hpp"

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return twg::run_cli(args, std::cout, std::cerr);
}
