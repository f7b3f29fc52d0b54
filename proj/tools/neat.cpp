#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "neat/cli.hpp"

int main(int argc, char** argv) {
    // Progress and warnings go to stderr so stdout stays parseable.
    spdlog::set_default_logger(spdlog::stderr_color_mt("neat"));
    std::vector<std::string> args(argv + 1, argv + argc);
    return neat::cli::run(args, std::cout, std::cerr);
}
