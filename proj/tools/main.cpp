#include "grad_cli.hpp"

int main(int argc, char** argv) { return grad::cli::run(argc, argv); }
