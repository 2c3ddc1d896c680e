#include "trax/pipeline.hpp"
int main() { return 0; }
