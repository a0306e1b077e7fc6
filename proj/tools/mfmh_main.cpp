#include "mfmh/commands.hpp"

int main(int argc, char** argv) { return mfmh::run_cli(argc, argv); }
