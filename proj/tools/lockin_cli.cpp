#include "lockin/cli.hpp"

int main(int argc, char** argv) { return lockin::cli::dispatch(argc, argv); }
