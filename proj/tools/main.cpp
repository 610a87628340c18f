#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "ptri/error.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return ptri::cli::run_cli(args);
    } catch (const ptri::Error& e) {
        std::cerr << "error: " << e.category_name() << ": " << e.what() << "\n";
        return static_cast<int>(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
}
