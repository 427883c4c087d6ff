#include <vector>

#include "gil/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return gil::cli_dispatch(args);
}
