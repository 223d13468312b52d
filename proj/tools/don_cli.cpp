#include "don/cli.hpp"

int main(int argc, char** argv) { return don::cli::run(argc, argv); }
