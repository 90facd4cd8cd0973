#include <cstdio>
int main() { std::puts("gsbog placeholder"); return 0; }
