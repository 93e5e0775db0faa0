#include "frailty/cli.hpp"

int main(int argc, char** argv) { return frailty::cli::main(argc, argv); }
