#include "commands.hpp"

int main(int argc, char** argv) { return se3spline::cli::run(argc, argv); }
