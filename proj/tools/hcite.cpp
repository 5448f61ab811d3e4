#include "hcite/pipeline.hpp"

int main(int argc, char** argv) { return hcite::cli::run(argc, argv); }
