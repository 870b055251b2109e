#include "sapx/cli.hpp"

int main(int argc, char** argv) { return sapx::cli::run(argc, argv); }
