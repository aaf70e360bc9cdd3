"""Independent reference computations used to freeze expected values.

Nothing here imports the package: each oracle solves its problem by a
different, elementary route.
"""
import mpmath as mp
import numpy as np


def tupling_lambda(p, n_terms=14, dps=40, guess=None):
    """lambda of the even fixed point of g = -(1/lam) g^(p+1)(-lam x), g(0) = 1, quadratic critical point.

    g(x) = 1 + sum_k a_k x^(2k) with n_terms unknowns, collocated at
    Chebyshev points of (0, 1] and solved by Newton in mpmath.
    """
    mp.mp.dps = dps
    n = n_terms
    xs = [mp.cos(mp.pi * (2 * i + 1) / (4 * n)) for i in range(n)]

    def g(a, x):
        x2 = x * x
        s, t = mp.mpf(1), mp.mpf(1)
        for ak in a:
            t *= x2
            s += ak * t
        return s

    def it(a, x, k):
        for _ in range(k):
            x = g(a, x)
        return x

    def F(*a):
        a = list(a)
        lam = -it(a, mp.mpf(0), p + 1)
        return [g(a, x) + it(a, lam * x, p + 1) / lam for x in xs]

    if guess is None:
        guess = {1: [-1.5276, 0.1048, 0.0267, -0.0035], 2: [-1.8, 0.0, 0.0]}[p]
    a0 = list(guess) + [0.0] * (n - len(guess))
    a = mp.findroot(F, [mp.mpf(v) for v in a0], tol=mp.mpf(10) ** (-dps + 8), maxsteps=100)
    a = [a[i] for i in range(n)]
    lam = -it(a, mp.mpf(0), p + 1)
    return float(lam), [float(v) for v in a]


def affine_lambda(p, nu, iters=200):
    """Root in (0, 1) of lam^nu + p lam^(nu-1) - 1 = 0 by plain bisection."""
    f = lambda x: x ** nu + p * x ** (nu - 1) - 1
    lo, hi = 1e-300, 1.0
    for _ in range(iters):
        m = 0.5 * (lo + hi)
        if f(m) < 0:
            lo = m
        else:
            hi = m
    return 0.5 * (lo + hi)


def mobius_linearizer(a, b, c, d):
    """Normalized linearizer (psi(1) = 0, psi(0) = 1) of z -> (a z + b)/(c z + d) fixing 1.

    With fixed points 1 and z*, psi(z) = (1 - z) / (1 - z / z*).
    """
    # fixed points: c z^2 + (d - a) z - b = 0, one root is 1
    assert abs(a + b - c - d) < 1e-14 * max(abs(a), abs(b), abs(c), abs(d))
    zs = -b / c  # product of roots is -b/c
    return lambda z: (1 - z) / (1 - z / zs), zs


def brute_z1(psi, r, lam, p, nu, n=10 ** 6):
    """Scan s on n grid points for the sign change of (s lam^(1-nu) v)^p (lam) - lam^(1-nu).

    v(w) = psi(-w)^(1/r).  Returns the midpoint of the bracketing cell.
    """
    s = np.linspace(1.0 / n, 1.0, n)
    x = np.full(n, float(lam))
    K = s * lam ** (1 - nu)
    for _ in range(p):
        x = K * np.abs(psi(-x)) ** (1.0 / r)
    d = x - lam ** (1 - nu)
    i = np.nonzero(np.sign(d[:-1]) != np.sign(d[1:]))[0]
    return [0.5 * (s[j] + s[j + 1]) for j in i], s[1] - s[0]


def log_inequality_value(x, dps=30):
    """(1 - x^2) log((1 + x^2)(1 + x)^2) + 4 x^2 log x in mpmath."""
    mp.mp.dps = dps
    x = mp.mpf(x)
    return float((1 - x ** 2) * mp.log((1 + x ** 2) * (1 + x) ** 2) + 4 * x ** 2 * mp.log(x))
