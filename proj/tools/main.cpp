#include "cli.hpp"

int main(int argc, char** argv) { return fusilade::cli::dispatch(argc, argv); }
