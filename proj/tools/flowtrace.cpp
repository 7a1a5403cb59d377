#include "flowtrace/cli.hpp"

int main(int argc, char** argv) {
    return flowtrace::run_cli({argv + 1, argv + argc});
}
