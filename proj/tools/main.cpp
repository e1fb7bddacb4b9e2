#include "hsaffine/cli.hpp"

int main(int argc, char** argv) { return hsaffine::cli::run(argc, argv); }
