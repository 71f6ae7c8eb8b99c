#include <cstdio>

long long solve(int n, const long long* a);

static long long values[50005];

int main() {
    int n;
    if (scanf("%d", &n) != 1 || n < 1 || n > 50000) return 1;
    for (int i = 0; i < n; ++i)
        if (scanf("%lld", &values[i]) != 1) return 1;
    printf("%lld\n", solve(n, values));
    return 0;
}
