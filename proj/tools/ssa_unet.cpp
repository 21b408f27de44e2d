#include "app/commands.hpp"

int main(int argc, char** argv) { return ssa::app::run(argc, argv); }
