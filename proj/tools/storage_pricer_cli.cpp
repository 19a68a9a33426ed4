#include "storage_pricer/cli.hpp"

int main(int argc, char** argv) { return storage_pricer::cli::run_command(argc, argv); }
