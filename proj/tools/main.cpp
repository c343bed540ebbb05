#include "toolplay/pipeline.hpp"

int main(int argc, char** argv) { return toolplay::run_cli(argc, argv); }
