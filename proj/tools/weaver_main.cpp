#include "weaver/cli.hpp"

int main(int argc, char** argv) { return weaver::cli_main(argc, argv); }
