#include "canonsys/cli.hpp"

int main(int argc, char** argv) { return canonsys::cli_main(argc, argv); }
