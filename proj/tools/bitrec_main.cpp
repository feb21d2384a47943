#include <string>
#include <vector>

#include "bitrec/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return bitrec::cli::run(std::move(args));
}
