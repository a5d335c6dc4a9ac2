#include "app.hpp"

int main(int argc, char** argv) { return transiam::app::run_cli(argc, argv); }
