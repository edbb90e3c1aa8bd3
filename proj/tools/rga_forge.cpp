#include "rga/cli.hpp"

int main(int argc, char** argv) { return rga::cli::main_entry(argc, argv); }
