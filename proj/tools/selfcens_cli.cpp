#include "selfcens/cli.hpp"

int main(int argc, char** argv) { return selfcens::cli_main(argc, argv); }
