#include "harunet/cli.hpp"

int main(int argc, char** argv) {
    return harunet::cli_main({argv + 1, argv + argc});
}
