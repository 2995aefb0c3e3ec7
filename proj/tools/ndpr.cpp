#include "ndpr/cli.hpp"

int main(int argc, char** argv) { return ndpr::cli::run(argc, argv); }
