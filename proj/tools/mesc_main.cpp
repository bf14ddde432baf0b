#include "mesc/cli.hpp"

int main(int argc, char** argv) { return mesc::cli::run(argc, argv); }
