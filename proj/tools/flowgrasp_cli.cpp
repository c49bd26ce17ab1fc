#include "commands.hpp"

int main(int argc, char** argv) { return flowgrasp::cli::run(argc, argv); }
