#include <cstdio>
#include <cstdlib>

// Full credit for the exact floor, half credit when off by one.
static bool read(const char* path, long long* v) {
    FILE* f = fopen(path, "r");
    if (!f) return false;
    bool ok = fscanf(f, "%lld", v) == 1;
    fclose(f);
    return ok;
}

int main(int argc, char** argv) {
    if (argc < 4) return 2;
    long long expected, actual;
    if (!read(argv[2], &expected)) return 2;
    if (!read(argv[3], &actual)) { puts("0"); return 0; }
    long long d = llabs(expected - actual);
    puts(d == 0 ? "1" : d == 1 ? "0.5" : "0");
    return 0;
}
