"""Chebyshev carriers for real-analytic functions, homographies, and Herglotz checks.

An AnalyticFn stores f(x) = offset + scale * w(x) * c(x) where c is a
Chebyshev series on [lo, hi] and w(x) = x - anchor (or 1 when no anchor is
set).  The anchored form keeps a prescribed zero of f - offset exact, which
is what makes maps with multipliers far below machine epsilon usable.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.fft import dct

from .errors import CompositionError, DomainError, EvaluationError

TAIL_TOL = 1e-13
DEFAULT_DEGREE = 128
GRID_POINTS = 257


@dataclass(frozen=True)
class DomainInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or not self.lo < self.hi:
            raise DomainError(f"invalid interval [{self.lo}, {self.hi}]")

    @property
    def width(self):
        return self.hi - self.lo

    def to_t(self, x):
        return (2.0 * x - self.lo - self.hi) / (self.hi - self.lo)

    def from_t(self, t):
        return 0.5 * (self.hi + self.lo) + 0.5 * (self.hi - self.lo) * t

    def nodes(self, n):
        """n + 1 Chebyshev-Lobatto points in ascending order."""
        return self.from_t(-np.cos(np.pi * np.arange(n + 1) / n))

    def grid(self, n=GRID_POINTS):
        return self.nodes(n - 1)

    def interior(self, n=GRID_POINTS, margin=0.05):
        """Lobatto grid of the interval shrunk by `margin` of its width on each side."""
        d = margin * self.width
        return DomainInterval(self.lo + d, self.hi - d).grid(n)

    def contains(self, x, slack=0.0):
        x = np.asarray(x)
        return (x >= self.lo - slack) & (x <= self.hi + slack)


def lobatto_coeffs(y):
    """Chebyshev coefficients of the interpolant through values at cos(pi j / n)."""
    n = len(y) - 1
    a = dct(np.asarray(y, float), type=1) / n
    a[0] *= 0.5
    a[-1] *= 0.5
    return a


def cheb_dd(c, t1, t2):
    """Divided difference (S(t1) - S(t2)) / (t1 - t2) of a Chebyshev series S.

    Uses D_{k+1} = 2 t1 D_k + 2 T_k(t2) - D_{k-1}, which stays valid at t1 == t2
    where it returns the derivative.
    """
    t1, t2 = np.broadcast_arrays(np.asarray(t1), np.asarray(t2))
    n = len(c) - 1
    if n < 1:
        return np.zeros(t1.shape, dtype=np.result_type(t1, float))
    d_prev, d = np.zeros_like(t1, dtype=float) * 0, np.ones_like(t1, dtype=np.result_type(t1, float))
    t_prev, t = np.ones_like(t2, dtype=np.result_type(t2, float)), t2 * 1.0
    acc = c[1] * d
    for k in range(1, n):
        d_prev, d = d, 2 * t1 * d + 2 * t - d_prev
        t_prev, t = t, 2 * t2 * t - t_prev
        acc = acc + c[k + 1] * d
    return acc


def _tail(c):
    m = max(1, len(c) // 8)
    return float(np.sum(np.abs(c[-m:])))


class AnalyticFn:
    """Real-analytic function on a closed interval, carried by a Chebyshev series.

    Parameters
    ----------
    domain : DomainInterval
    coeffs : array_like
        Chebyshev coefficients of the core series c.
    offset, scale : float
        f = offset + scale * w * c.
    anchor : float or None
        If set, w(x) = x - anchor so that f(anchor) = offset exactly.
    extension : callable or None
        Evaluator used for real points outside the interval.
    """

    def __init__(self, domain, coeffs, tail_bound=None, offset=0.0, scale=1.0,
                 anchor=None, tol=TAIL_TOL, extension=None):
        self.domain = domain
        self.coeffs = np.asarray(coeffs, float)
        self.offset = float(offset)
        self.scale = float(scale)
        self.anchor = None if anchor is None else float(anchor)
        self.tol = tol
        self.extension = extension
        tail = _tail(self.coeffs)
        self.core_tail = tail
        if tail_bound is None:
            w = 1.0
            if self.anchor is not None:
                w = max(abs(domain.lo - self.anchor), abs(domain.hi - self.anchor))
            tail_bound = abs(self.scale) * w * tail
        self.tail_bound = float(tail_bound)

    # -- basic properties
    @property
    def degree(self):
        return len(self.coeffs) - 1

    @property
    def resolved(self):
        norm = float(np.sum(np.abs(self.coeffs)))
        return self.core_tail <= self.tol * max(norm, 1e-300)

    def _w(self, x):
        return 1.0 if self.anchor is None else x - self.anchor

    # -- evaluation
    def core(self, x):
        return C.chebval(self.domain.to_t(x), self.coeffs)

    def __call__(self, x):
        x = np.asarray(x)
        if np.iscomplexobj(x):
            ok = self.in_ellipse(x)
            out = self.offset + self.scale * self._w(x) * C.chebval(self.domain.to_t(x), self.chopped())
            return np.where(ok, out, np.nan + 0j)
        x = x.astype(float)
        out = self.offset + self.scale * self._w(x) * self.core(x)
        slack = 1e-12 * self.domain.width
        inside = self.domain.contains(x, slack)
        if np.all(inside):
            return out
        if self.extension is not None:
            ext = self.extension(np.where(inside, self.domain.lo, x))
            return np.where(inside, out, ext)
        return np.where(inside, out, np.nan)

    def core_deriv(self, x, k=1):
        if k == 0:
            return self.core(x)
        # differentiate the chopped series: noise-floor coefficients grow like j^(2k) under chebder
        c = self.chopped()
        dc = C.chebder(c, k) if k < len(c) else np.zeros(1)
        return C.chebval(self.domain.to_t(x), dc) * (2.0 / self.domain.width) ** k

    def deriv(self, x, k=1):
        """Exact k-th derivative from the coefficient sequence."""
        x = np.asarray(x, float)
        if k == 0:
            return self(x)
        if self.anchor is None:
            return self.scale * self.core_deriv(x, k)
        return self.scale * ((x - self.anchor) * self.core_deriv(x, k) + k * self.core_deriv(x, k - 1))

    def taylor(self, x, n):
        """Taylor coefficients f^(k)(x)/k!, k = 0..n, shape (n+1, len(x))."""
        x = np.atleast_1d(np.asarray(x, float))
        out = [self(x)] + [self.deriv(x, k) / factorial(k) for k in range(1, n + 1)]
        return np.array(out)

    def dd(self, x, y):
        """Divided difference (f(x) - f(y)) / (x - y), exact at x == y."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        ddc = cheb_dd(self.coeffs, self.domain.to_t(x), self.domain.to_t(y)) * (2.0 / self.domain.width)
        if self.anchor is None:
            return self.scale * ddc
        return self.scale * ((x - self.anchor) * ddc + self.core(y))

    # -- analyticity region
    def ellipse_rho(self):
        """Bernstein-ellipse parameter implied by the measured coefficient decay."""
        a = np.abs(self.coeffs)
        if a.max() == 0:
            return np.inf
        env = np.maximum.accumulate(a[::-1])[::-1]
        k = np.arange(len(a))
        keep = env > 1e3 * np.finfo(float).eps * a.max()
        if keep.sum() < 4:
            return 1e3
        slope = np.polyfit(k[keep], np.log(env[keep]), 1)[0]
        rho = float(np.exp(-slope))
        return max(1.0, 1.0 + 0.8 * (rho - 1.0))

    def complex_rho(self):
        """Ellipse parameter trusted for complex evaluation of the chopped series.

        Past the noise floor at index k0 coefficient errors grow like rho^k0, so
        evaluating at sqrt(rho) keeps the error near sqrt(eps).
        """
        return float(np.sqrt(self.ellipse_rho()))

    def chopped(self):
        """Coefficients with the noise-floor tail removed."""
        if getattr(self, "_chopped", None) is not None:
            return self._chopped
        a = np.abs(self.coeffs)
        keep = np.nonzero(a > 1e2 * np.finfo(float).eps * max(a.max(), 1e-300))[0]
        n = keep[-1] + 1 if len(keep) else 1
        self._chopped = self.coeffs[:n]
        return self._chopped

    def in_ellipse(self, z):
        t = self.domain.to_t(np.asarray(z, complex))
        s = np.sqrt(t - 1) * np.sqrt(t + 1)
        rho = np.maximum(np.abs(t + s), np.abs(t - s))
        return rho < self.complex_rho()

    # -- algebra
    def __neg__(self):
        return AnalyticFn(self.domain, self.coeffs, self.tail_bound, -self.offset, -self.scale,
                          self.anchor, self.tol,
                          None if self.extension is None else (lambda x, e=self.extension: -e(x)))

    def with_extension(self, extension):
        return AnalyticFn(self.domain, self.coeffs, self.tail_bound, self.offset, self.scale,
                          self.anchor, self.tol, extension)

    def to_dict(self):
        return {"domain": [self.domain.lo, self.domain.hi],
                "coeffs": [float(c) for c in self.coeffs],
                "tail_bound": self.tail_bound, "offset": self.offset,
                "scale": self.scale, "anchor": self.anchor}

    @classmethod
    def from_dict(cls, d):
        return cls(DomainInterval(*d["domain"]), d["coeffs"], d.get("tail_bound"),
                   d.get("offset", 0.0), d.get("scale", 1.0), d.get("anchor"))

    def __repr__(self):
        return (f"AnalyticFn([{self.domain.lo:.6g}, {self.domain.hi:.6g}], deg={self.degree}, "
                f"tail={self.tail_bound:.2e}, anchor={self.anchor})")


def _sample(fn, x):
    y = np.asarray(fn(x), float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape).astype(float)
    if not np.all(np.isfinite(y)):
        bad = x[~np.isfinite(y)]
        raise EvaluationError(f"non-finite sample on [{bad.min():.6g}, {bad.max():.6g}]", stage="fit")
    return y


def fit(fn, domain, degree=DEFAULT_DEGREE, tol=TAIL_TOL):
    """Interpolate `fn` at degree + 1 Chebyshev-Lobatto points of `domain`."""
    if degree < 2:
        raise DomainError("degree must be >= 2")
    x = domain.from_t(np.cos(np.pi * np.arange(degree + 1) / degree))
    return AnalyticFn(domain, lobatto_coeffs(_sample(fn, x)), tol=tol)


def fit_core(core_fn, domain, degree=DEFAULT_DEGREE, offset=0.0, scale=1.0, anchor=None,
             tol=TAIL_TOL, extension=None):
    """Fit the core series c directly, for f = offset + scale * (x - anchor) * c."""
    x = domain.from_t(np.cos(np.pi * np.arange(degree + 1) / degree))
    y = _sample(core_fn, x)
    return AnalyticFn(domain, lobatto_coeffs(y), None, offset, scale, anchor, tol, extension)


def compose(f, g, degree=DEFAULT_DEGREE):
    """Refit f o g on the domain of g after checking that g maps into dom f."""
    x = np.union1d(g.domain.grid(), g.domain.nodes(degree))
    gx = g(x)
    slack = g.tail_bound + 1e-12 * f.domain.width
    bad = ~f.domain.contains(gx, slack) | ~np.isfinite(gx)
    if np.any(bad):
        xb = x[bad]
        raise CompositionError(f"range of inner function leaves [{f.domain.lo:.6g}, {f.domain.hi:.6g}] "
                               f"on [{xb.min():.6g}, {xb.max():.6g}]", stage="compose",
                               payload={"interval": [float(xb.min()), float(xb.max())]})
    lo, hi = f.domain.lo, f.domain.hi
    return fit(lambda t: f(np.clip(g(t), lo, hi)), g.domain, degree)


class PowerFn:
    """f = K * base^(1/r), evaluated on the principal branch where base > 0."""

    def __init__(self, base, r, K=1.0, domain=None):
        self.base = base
        self.r = float(r)
        self.K = float(K)
        self.domain = domain or base.domain

    @property
    def resolved(self):
        return self.base.resolved

    @property
    def tail_bound(self):
        return abs(self.K) * self.base.tail_bound

    def __call__(self, x):
        b = np.asarray(self.base(x))
        if np.iscomplexobj(b):
            return self.K * b ** (1.0 / self.r)
        return self.K * np.where(b >= 0, np.abs(b) ** (1.0 / self.r), np.nan)

    def taylor(self, x, n):
        a = self.base.taylor(x, n)
        return self.K * series_power(a, 1.0 / self.r)

    def deriv(self, x, k=1):
        return self.taylor(x, k)[k] * factorial(k)

    def __neg__(self):
        return PowerFn(self.base, self.r, -self.K, self.domain)


def series_power(a, alpha):
    """Taylor coefficients of A^alpha given those of A (rows = orders), a[0] > 0."""
    a = np.asarray(a, float)
    b = np.zeros_like(a)
    b[0] = a[0] ** alpha
    for k in range(1, len(a)):
        s = 0.0
        for j in range(1, k + 1):
            s = s + ((alpha + 1) * j - k) * a[j] * b[k - j]
        b[k] = s / (k * a[0])
    return b


# ---------------------------------------------------------------- homographies

class Homography:
    """z -> (a z + b) / (c z + d).  Coefficients may be Fractions for exact algebra."""

    def __init__(self, a, b, c, d):
        self.a, self.b, self.c, self.d = a, b, c, d
        if self.det == 0:
            raise DomainError("degenerate homography (ad - bc = 0)")

    @property
    def det(self):
        return self.a * self.d - self.b * self.c

    @property
    def exact(self):
        return all(isinstance(v, (int, Fraction)) for v in (self.a, self.b, self.c, self.d))

    def _coef(self, z):
        if isinstance(z, np.ndarray) or isinstance(z, (float, complex)):
            return tuple(float(v) for v in (self.a, self.b, self.c, self.d))
        return self.a, self.b, self.c, self.d

    def __call__(self, z):
        a, b, c, d = self._coef(z)
        return (a * z + b) / (c * z + d)

    def dd(self, x, y):
        """(h(x) - h(y)) / (x - y) = det / ((c x + d)(c y + d))."""
        a, b, c, d = self._coef(x)
        return (a * d - b * c) / ((c * x + d) * (c * y + d))

    def deriv(self, z):
        return self.dd(z, z)

    def __matmul__(self, other):
        """self o other."""
        return Homography(self.a * other.a + self.b * other.c, self.a * other.b + self.b * other.d,
                          self.c * other.a + self.d * other.c, self.c * other.b + self.d * other.d)

    def inverse(self):
        return Homography(self.d, -self.b, -self.c, self.a)

    @property
    def pole(self):
        return None if self.c == 0 else -self.d / self.c

    def normalized(self):
        """Scale so that the first nonzero of (c, d) equals 1."""
        k = self.c if self.c != 0 else self.d
        return Homography(self.a / k, self.b / k, self.c / k, self.d / k)

    def equals(self, other, tol=0.0):
        p, q = self.normalized(), other.normalized()
        diffs = [abs(x - y) for x, y in zip((p.a, p.b, p.c, p.d), (q.a, q.b, q.c, q.d))]
        return all(dv <= tol for dv in diffs)

    def is_identity(self, tol=0.0):
        return self.equals(Homography(1, 0, 0, 1), tol)

    def to_analytic(self, domain, degree=DEFAULT_DEGREE):
        return fit(lambda x: self(x), domain, degree)

    def __repr__(self):
        return f"Homography({self.a}, {self.b}, {self.c}, {self.d})"


def _check_unit(name, s):
    if not 0 < s < 1:
        raise DomainError(f"{name} = {s} must lie in (0, 1)")


def make_h(s, t):
    """Homography fixing 0 and 1 and sending -1/s to -1/t."""
    _check_unit("s", s)
    _check_unit("t", t)
    return Homography(s + 1, 0 * s, s - t, 1 + t)


def chi_homography(b, s):
    """The Herglotz homography with chi(1) = 1, chi'(1) = b^s and pole right of 1/b^2."""
    _check_unit("b", b)
    if not s > 1:
        raise DomainError("s must exceed 1")
    B = b ** s * (1 + b)
    return Homography(B - b * b, 1 + b + b * b - B, -b * b, 1 + b + b * b)


def make_chi(b, s, degree=DEFAULT_DEGREE):
    """chi_{b,s} on [-1/b, 1/b^2], stored as 1 + b^s (z - 1) c(z) with c(1) = 1."""
    _check_unit("b", b)
    if not s > 1:
        raise DomainError("s must exceed 1")
    dom = DomainInterval(-1.0 / b, 1.0 / b ** 2)
    core = lambda z: (1 + b) / (1 + b - b * b * (z - 1))
    return fit_core(core, dom, degree, offset=1.0, scale=b ** s, anchor=1.0)


def make_theta(sigma_pow, tau1_pow):
    """Homography fixing 0 and 1 and sending 1/sigma_pow to 1/tau1_pow."""
    if not 0 < sigma_pow < tau1_pow < 1:
        raise DomainError("need 0 < sigma^nu < tau1^nu < 1")
    s, t = sigma_pow, tau1_pow
    return Homography(1 - s, 0 * s, t - s, 1 - t)


def schwarz_multiplier_bound(A, B, A2, B2):
    """Derivative at 0 of the homography taking [-A, B] onto [-A2, B2] and fixing 0."""
    if min(A, B, A2, B2) <= 0:
        raise DomainError("all arguments must be positive")
    return A2 * B2 * (A + B) / (A * B * (A2 + B2))


# ---------------------------------------------------------------- certification

@dataclass
class CertReport:
    passed: bool
    min_eig: float
    min_deriv: float
    min_logderiv: float
    worst_x: float
    n_points: int
    notes: list = field(default_factory=list)

    def to_dict(self):
        return dict(passed=self.passed, min_eig=self.min_eig, min_deriv=self.min_deriv,
                    min_logderiv=self.min_logderiv, worst_x=self.worst_x, n_points=self.n_points)


def herglotz_certify(f, N=2, tol=1e-9, anti=False, points=None, require_resolved=True):
    """Sampled Herglotz test on the real trace of `f`.

    At each sample x the N x N matrix M_jk = f^(j+k+1)(x)/(j+k+1)! must be
    positive semidefinite (relative to its size), f' > 0, and the two-sided
    bound -2/(x-lo) <= f''/f' <= 2/(hi-x) must hold.

    Parameters
    ----------
    f : AnalyticFn or PowerFn
        Anything with `taylor(x, n)`, `domain` and `resolved`.
    anti : bool
        Certify -f instead (anti-Herglotz functions).
    points : array_like, optional
        Sample points; default is the 257-point grid of the inner 90 percent.

    Returns
    -------
    CertReport
    """
    if N < 1:
        raise DomainError("N must be >= 1")
    if require_resolved and not f.resolved:
        raise DomainError("function is not resolved", stage="herglotz_certify")
    x = f.domain.interior() if points is None else np.atleast_1d(np.asarray(points, float))
    T = f.taylor(x, max(2 * N, 2))
    if anti:
        T = -T
    min_eig = np.inf
    worst_x = float(x[0])
    for i in range(len(x)):
        M = np.array([[T[j + k + 1, i] for k in range(N)] for j in range(N)])
        size = np.max(np.abs(M))
        e = np.linalg.eigvalsh(M)[0] / size if size > 0 else 0.0
        if e < min_eig:
            min_eig, worst_x = float(e), float(x[i])
    d1, d2 = T[1], 2 * T[2]
    s = np.maximum(np.abs(d1), 1e-300)
    min_deriv = float(np.min(d1 / np.max(np.abs(d1))))
    lo, hi = f.domain.lo, f.domain.hi
    lg = np.minimum(d2 * (x - lo) + 2 * d1, 2 * d1 - d2 * (hi - x)) / s
    min_logderiv = float(np.min(lg))
    passed = min_eig >= -tol and min_deriv >= -tol and min_logderiv >= -tol
    return CertReport(bool(passed), min_eig, min_deriv, min_logderiv, worst_x, len(x))


@dataclass
class EnvelopeReport:
    passed: bool
    worst_sandwich: float
    worst_logderiv: float
    worst_x: float
    n_points: int

    def to_dict(self):
        return dict(passed=self.passed, worst_sandwich=self.worst_sandwich,
                    worst_logderiv=self.worst_logderiv, worst_x=self.worst_x, n_points=self.n_points)


def envelope_margins(psi, u_minus, u_plus, z):
    """Signed margins of the sandwich and log-derivative envelopes at points z."""
    z = np.asarray(z, float)
    if hasattr(psi, "anchor") and psi.anchor == 1.0 and psi.offset == 0.0:
        q = lambda x: -psi.scale * psi.core(x)
        dpsi = psi.deriv(z)
    else:
        q = lambda x: -psi.dd(x, np.ones_like(x))
        dpsi = psi.deriv(z)
    qz = q(z)
    sgn = np.where(z >= 0, 1.0, -1.0)
    s1 = sgn * (1 - q(z) * (1 - u_plus * z))
    s2 = sgn * (q(z) * (1 + u_minus * z) - 1)
    g = -dpsi / qz
    lo = (1 - u_plus) / (1 - u_plus * z)
    hi = (1 + u_minus) / (1 + u_minus * z)
    side = np.where(z <= 1, 1.0, -1.0)
    l1 = side * (g - lo)
    l2 = side * (hi - g)
    return np.minimum(s1, s2), np.minimum(l1, l2)


def e0_envelope_check(psi, u_minus, u_plus, tol=1e-9, points=None):
    """Check the sandwich and log-derivative envelopes of an E0(u-, u+) function.

    `psi` must satisfy psi(0) = 1 and psi(1) = 0.  The grid is the 257-point
    Chebyshev grid of the part of psi's interval inside (-1/u-, 1/u+).
    """
    p0, p1 = float(psi(np.array([0.0]))[0]), float(psi(np.array([1.0]))[0])
    if abs(p0 - 1) > tol or abs(p1) > tol:
        raise DomainError(f"normalization failed: psi(0)={p0}, psi(1)={p1}", stage="e0_envelope_check")
    if points is None:
        lo = psi.domain.lo if u_minus <= 0 else max(psi.domain.lo, -(1 - 1e-9) / u_minus)
        hi = psi.domain.hi if u_plus <= 0 else min(psi.domain.hi, (1 - 1e-9) / u_plus)
        points = DomainInterval(lo, hi).grid()
    z = np.asarray(points, float)
    sand, logd = envelope_margins(psi, u_minus, u_plus, z)
    ws, wl = float(np.min(sand)), float(np.min(logd))
    i = int(np.argmin(np.minimum(sand, logd)))
    return EnvelopeReport(bool(min(ws, wl) >= -tol), ws, wl, float(z[i]), len(z))


def lemma_noses_bound(f, A, a, b, B, z):
    """Lower bound for a Herglotz f at z from its values at a and b (pole-free on (A, B))."""
    if not (A < a < z < b < B):
        raise DomainError("need A < a < z < b < B")
    fa, fb = float(np.asarray(f(np.array([a])))[0]), float(np.asarray(f(np.array([b])))[0])
    if np.isinf(B):
        return ((z - a) * fb + (b - z) * fa) / (b - a)
    return ((B - b) * (z - a) * fb + (B - a) * (b - z) * fa) / ((b - a) * (B - z))
