// Compiles the amalgamated Catch2 v3 framework (including its default main)
// once for all test binaries.
#include "catch_amalgamated.cpp"
