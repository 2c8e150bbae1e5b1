#include "aptf/experiment.hpp"

int main(int argc, char** argv) {
    return aptf::cli_main(argc, argv);
}
