#include "rtinfer/cli.hpp"

int main(int argc, char** argv) { return rtinfer::cli::run(argc, argv); }
