#include "interdance/cli.hpp"

int main(int argc, char** argv) { return interdance::run(argc, argv); }
