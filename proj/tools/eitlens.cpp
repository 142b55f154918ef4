#include "eitlens/cli.hpp"

int main(int argc, char** argv) { return eitlens::main_entry(argc, argv); }
