#include "cli.hpp"

int main(int argc, char** argv) { return spamm::cli::run(argc, argv); }
