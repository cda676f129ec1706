#include "resforge/cli.hpp"

int main(int argc, char** argv) { return resforge::cli::dispatch(argc, argv); }
