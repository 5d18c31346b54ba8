"""High-precision reference values for the paired t-test fixtures.

Computes t statistics and two-tailed p-values with mpmath at 50 digits, using
the closed-form Student-t tail via the regularized incomplete beta function
(mpmath.betainc), independently of the C++ implementation. Output is pasted
into tests/test_stats.cpp.
"""
import mpmath as mp

mp.mp.dps = 50

FIXTURES = [
    ([1.0, 2.0, 3.0], [0.0, 0.0, 0.0]),
    ([0.52, 0.61, 0.47, 0.55, 0.58], [0.50, 0.55, 0.49, 0.51, 0.52]),
    ([1.5, 2.5, 3.5, 4.5], [1.0, 2.0, 3.1, 3.9]),
    ([10.0, 12.0, 9.0, 11.0, 13.0, 8.0], [9.5, 11.0, 9.2, 10.1, 12.4, 8.3]),
    ([0.1, 0.2], [0.3, 0.1]),
    ([3.2, 2.9, 3.8, 4.1, 3.3, 2.7, 3.9], [3.0, 3.1, 3.5, 3.7, 3.4, 2.5, 3.6]),
    ([0.91, 0.88, 0.95, 0.97, 0.90, 0.93, 0.94, 0.96], [0.90, 0.89, 0.90, 0.91, 0.88, 0.92, 0.90, 0.93]),
    ([5.0, 7.0, 6.0, 9.0, 4.0], [5.5, 6.5, 6.2, 8.0, 4.1]),
    ([0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0],
     [0.2, 0.7, 0.1, 0.3, 0.5, 0.4, 0.2, 0.6, 0.1, 0.3]),
    ([100.0, 101.0, 102.5, 99.0, 100.5, 103.0, 98.5, 101.5, 102.0, 100.0, 99.5, 101.0],
     [99.0, 100.0, 101.0, 99.5, 99.0, 101.5, 98.0, 100.0, 101.5, 99.0, 99.0, 100.0]),
]


def paired(a, b):
    d = [mp.mpf(repr(x)) - mp.mpf(repr(y)) for x, y in zip(a, b)]
    n = len(d)
    mean = mp.fsum(d) / n
    var = mp.fsum((x - mean) ** 2 for x in d) / (n - 1)
    t = mean / (mp.sqrt(var) / mp.sqrt(n))
    nu = n - 1
    p = mp.betainc(mp.mpf(nu) / 2, mp.mpf(1) / 2, 0, nu / (nu + t * t), regularized=True)
    return t, nu, p


if __name__ == "__main__":
    for a, b in FIXTURES:
        t, nu, p = paired(a, b)
        print(f"{{{a}, {b}, {mp.nstr(t, 20)}, {nu}, {mp.nstr(p, 20)}}},")
