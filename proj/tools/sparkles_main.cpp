#include "sparkles/cli.hpp"

int main(int argc, char** argv) { return sparkles::dispatch(argc, argv); }
