#include "octex/cli.hpp"

int main(int argc, char** argv) { return octex::cli::run_verb(argc, argv); }
