"""One renormalization step: conjugate, linearize, solve for z1, rebuild phi.

Maps fixing 1 are handled through their quotient Q(z) = (F(z) - 1) / (z - 1),
so that F = 1 + (z - 1) Q(z).  Every stage propagates such quotients (chain
rule for divided differences) instead of values, which keeps full relative
precision even when the multiplier F'(1) = Q(1) is below machine epsilon.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .analytic_core import (DEFAULT_DEGREE, AnalyticFn, DomainInterval, chi_homography,
                            fit_core, make_h, make_theta)
from .errors import (DomainError, EvaluationError, FeasibilityError, LinearizationError,
                     RegimeError, SolverError)

LOW_NU, P1_HIGH_NU, PGE2_HIGH_NU = "LOW_NU", "P1_HIGH_NU", "PGE2_HIGH_NU"
MAX_EXT_DEPTH = 2
MAX_EXT_STEPS = 200


# ---------------------------------------------------------------- regime constants

def _invert_increasing(g, s):
    return brentq(lambda b: g(b) - s, 1e-300, 1 - 1e-16, xtol=1e-15, rtol=1e-15, maxiter=500)


def b1(s):
    """Inverse of b -> 1 + log((1+b)(1+sqrt b)^2) / log(1/b) on (0, 1)."""
    if s <= 1:
        raise DomainError("s must exceed 1")
    return _invert_increasing(lambda b: 1 + np.log((1 + b) * (1 + np.sqrt(b)) ** 2) / np.log(1 / b), s)


def b3(s):
    """Inverse of b -> 1 + log(1+b) / log(1/b) on (0, 1)."""
    if s <= 1:
        raise DomainError("s must exceed 1")
    return _invert_increasing(lambda b: 1 + np.log1p(b) / np.log(1 / b), s)


def b0(s):
    return 0.125 ** (1 / s)


def b5(s):
    return 0.479 ** (1 / s)


def b6(s):
    return 0.803 ** (1 / s)


def feasibility_margin(p, r, nu):
    """Left side of the existence condition; solutions exist iff it is > 0."""
    if nu <= 1:
        return r * nu - 1 - (p - 1) * (1 - nu)
    return r - 1


def default_lambda1(p, r, nu):
    return min(0.125, 0.5 * (9 * r) ** (-p / (r * nu - 1)))


@dataclass(frozen=True)
class RegimeParams:
    p: int
    r: float
    nu: float
    b: float
    regime: str
    lambda1: float = None
    test_mode: bool = False

    @property
    def rnu(self):
        return self.r * self.nu

    def to_dict(self):
        return dict(p=self.p, r=self.r, nu=self.nu, b=self.b, regime=self.regime,
                    lambda1=self.lambda1, test_mode=self.test_mode)


def make_params(p, r, nu, lambda1=None, use_N=False, test_mode=False):
    """Validate (p, r, nu), pick the regime and its frame constant b."""
    p = int(p)
    r, nu = float(r), float(nu)
    if p < 1:
        raise DomainError("p must be a positive integer")
    if not 0 < nu <= 2:
        raise DomainError("nu must lie in (0, 2]")
    margin = feasibility_margin(p, r, nu)
    if r == 1 and nu > 1 and test_mode:
        pass
    elif not (r > 1 and margin > 0):
        raise FeasibilityError(f"no solutions for p={p}, r={r}, nu={nu}", stage="feasibility",
                               payload={"margin": margin})
    s = r * nu
    if nu <= 1:
        regime = LOW_NU
        b = b1(s) if p >= 2 else b3(s)
    elif p == 1:
        regime, b = P1_HIGH_NU, b5(s)
    else:
        regime, b = PGE2_HIGH_NU, b6(s)
    if use_N:
        if regime != PGE2_HIGH_NU:
            raise RegimeError("the truncated operator is defined only for p >= 2, nu > 1")
        bound = (9 * r) ** (-p / (s - 1))
        lambda1 = default_lambda1(p, r, nu) if lambda1 is None else float(lambda1)
        if not (0 < lambda1 <= 0.125 and lambda1 < bound):
            raise DomainError(f"lambda1 = {lambda1} must lie in (0, min(1/8, {bound:.6g}))")
    else:
        lambda1 = None
    return RegimeParams(p, r, nu, float(b), regime, lambda1, bool(test_mode))


def a0(lam, b):
    return b - lam * (1 - b)


def a1(lam, b):
    return (1 + lam) / 2 + (b - lam) / (1 + b)


def a_frame(lam, params):
    return a1(lam, params.b) if params.regime == PGE2_HIGH_NU else a0(lam, params.b)


def lambda_floor(params):
    """Smallest lambda any solution can have (regime-appropriate closed form)."""
    p, r, nu, b = params.p, params.r, params.nu, params.b
    s = r * nu
    if params.regime == LOW_NU:
        c = (1 - b) ** 2 / (4 * r * (1 + b))
        return c ** (p / (s - 1 - (p - 1) * (1 - nu)))
    if params.regime == P1_HIGH_NU:
        return ((1 - b) / (r * (1 + b) * (1 + b * b))) ** (1 / (s - 1))
    return min(1 / 7, (6 * r) ** (-p / (s - 1)))


def derivative_cap(lam, params):
    """Regime Schwarz bound on phi'(1) for a frame at lambda."""
    if params.regime == LOW_NU:
        return lam / ((1 + lam) * (1 + np.sqrt(lam)) ** 2) if params.p >= 2 else lam / (1 + lam)
    if params.regime == P1_HIGH_NU:
        return np.log(1 / lam) / (2 * (1 - lam * lam))
    return 9 / (4 + 2 * np.sqrt(13))


# ---------------------------------------------------------------- small numerics

def powdiff_quot(a, b, alpha):
    """(a^alpha - b^alpha) / (a - b) for a, b > 0, accurate when a is close to b."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    t = (a - b) / b
    small = np.abs(t) < 1e-7
    ts = np.where(small, 1.0, t)
    with np.errstate(invalid="ignore", divide="ignore"):
        big = b ** alpha * np.expm1(alpha * np.log1p(ts)) / (ts * b)
    ser = alpha * b ** (alpha - 1) * (1 + (alpha - 1) * t / 2 + (alpha - 1) * (alpha - 2) * t * t / 6)
    out = np.where(small, ser, big)
    return np.where((a >= 0) & (b > 0), out, np.nan)


def _zero_fixing_ratio(hom, y):
    """hom(y) / y for a homography with hom(0) = 0."""
    return float(hom.a) / (float(hom.c) * np.asarray(y, float) + float(hom.d))


# ---------------------------------------------------------------- maps fixing 1

class FrameMap:
    """A map F with F(1) = 1 living in the frame with parameter `lam`.

    Subclasses implement quot(z) = (F(z) - 1)/(z - 1).  `xi` is the right end
    of the natural domain; the left end is -1/lam.
    """
    lam = None
    xi = np.inf
    hint = None

    def quot(self, z, depth=0):
        raise NotImplementedError

    def __call__(self, z, depth=0):
        z = np.asarray(z, float)
        return 1 + (z - 1) * self.quot(z, depth)

    @property
    def d1(self):
        return float(self.quot(np.array([1.0]))[0])


class HomographyMap(FrameMap):
    def __init__(self, hom, lam, xi):
        self.hom, self.lam, self.xi = hom, lam, xi

    def quot(self, z, depth=0):
        z = np.asarray(z, float)
        out = self.hom.dd(z, np.ones_like(z))
        return np.where((z > -1 / self.lam) & (z <= self.xi), out, np.nan)


class FnMap(FrameMap):
    """Frame map backed by a fitted AnalyticFn (anchored at 1 when possible)."""

    def __init__(self, fn, lam, hint=None):
        self.fn, self.lam, self.hint = fn, lam, hint
        self.xi = fn.domain.hi

    def quot(self, z, depth=0):
        z = np.asarray(z, float)
        f = self.fn
        inside = f.domain.contains(z, 1e-12 * f.domain.width)
        zc = np.clip(z, f.domain.lo, f.domain.hi)
        if f.anchor == 1.0 and f.offset == 1.0:
            out = f.scale * f.core(zc)
        else:
            out = f.dd(zc, np.ones_like(zc))
        return np.where(inside, out, np.nan)


def map_right_end(xi, s, t):
    """Image of a right endpoint xi under h_{s,t}, infinite past the pole."""
    if s == t:
        return xi
    if t > s:
        pole = (1 + t) / (t - s)
        if xi >= pole:
            return np.inf
    if not np.isfinite(xi):
        return (1 + s) / (s - t) if s > t else np.inf
    return float(make_h(s, t)(float(xi)))


class ConjMap(FrameMap):
    """h_{s,t} o F o h_{t,s} for F in frame s, now in frame t."""

    def __init__(self, parent, t):
        self.parent, self.lam = parent, float(t)
        s = parent.lam
        self.same = s == t
        if not self.same:
            self.H, self.Hinv = make_h(s, t), make_h(t, s)
        self.xi = map_right_end(parent.xi, s, t)
        self.hint = parent.hint

    def quot(self, z, depth=0):
        z = np.asarray(z, float)
        if self.same:
            return self.parent.quot(z, depth)
        x = self.Hinv(z)
        qp = self.parent.quot(x, depth)
        delta = (x - 1) * qp
        one = np.ones_like(z)
        return self.H.dd(1 + delta, one) * qp * self.Hinv.dd(z, one)


class BlendMap(FrameMap):
    """Convex combination (1 - theta) A + theta B of two maps in the same frame."""

    def __init__(self, A, B, theta):
        self.A, self.B, self.theta = A, B, theta
        self.lam, self.xi, self.hint = B.lam, min(A.xi, B.xi), B.hint

    def quot(self, z, depth=0):
        return (1 - self.theta) * self.A.quot(z, depth) + self.theta * self.B.quot(z, depth)


# ---------------------------------------------------------------- psi and v

class Psi:
    """psi(z) = (1 - z) q(z) with q on a window, extended through psi = psi o phi0 / m.

    `ext` is a FrameMap phi0 whose multiplier is `mult`; outside the window
    q(x) = k(x) q(phi0(x)) with k = quot/mult.  An optional `post` homography
    (the truncation rescaling) is applied on top of the extension.
    """

    def __init__(self, fn, ext=None, mult=None, post=None):
        self.fn, self.ext, self.mult, self.post = fn, ext, mult, post
        self.dom = fn.domain

    def _inside(self, x):
        return self.dom.contains(x, 1e-12 * self.dom.width)

    def q(self, x, depth=0):
        x = np.asarray(x, float)
        inside = self._inside(x)
        out = self.fn.core(np.clip(x, self.dom.lo, self.dom.hi))
        if np.all(inside):
            return out
        ext = np.full(x.shape, np.nan)
        if self.ext is not None and depth < MAX_EXT_DEPTH:
            xo = x[~inside]
            # follow the phi0 orbit until it enters the window, collecting k = Q / mult
            y, fac = xo.copy(), np.ones_like(xo)
            todo = np.ones(xo.shape, bool)
            for _ in range(MAX_EXT_STEPS):
                Q = self.ext.quot(y[todo], depth + 1)
                fac[todo] *= Q / self.mult
                y[todo] = 1 + (y[todo] - 1) * Q
                todo &= np.isfinite(y) & ~self._inside(y)
                if not todo.any():
                    break
            raw = np.where(todo, np.nan, self.q_raw(np.where(np.isfinite(y), y, 1.0), depth + 1) * fac)
            if self.post is not None:
                raw = _zero_fixing_ratio(self.post, (1 - xo) * raw) * raw
            ext[~inside] = raw
        return np.where(inside, out, ext)

    def q_raw(self, x, depth=0):
        """q of the untruncated linearizer (identical to q when no rescaling is used)."""
        if self.post is None:
            return self.q(x, depth)
        x = np.asarray(x, float)
        qx = self.q(x, depth)
        return _zero_fixing_ratio(self.post.inverse(), (1 - x) * qx) * qx

    def __call__(self, x, depth=0):
        x = np.asarray(x, float)
        return (1 - x) * self.q(x, depth)

    def dd(self, x, y, depth=0):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        both = self._inside(x) & self._inside(y)
        lo, hi = self.dom.lo, self.dom.hi
        out = self.fn.dd(np.clip(x, lo, hi), np.clip(y, lo, hi))
        if np.all(both):
            return out
        with np.errstate(invalid="ignore", divide="ignore"):
            alt = (self(x, depth) - self(y, depth)) / (x - y)
        return np.where(both, out, alt)

    def deriv(self, x, k=1):
        return self.fn.deriv(np.asarray(x, float), k)

    def as_fn(self):
        return self.fn.with_extension(lambda x: self(x))


def psi_from_core(core_fn, domain, degree=DEFAULT_DEGREE):
    """Fit q on `domain` and return the anchored AnalyticFn psi = (1 - z) q."""
    return fit_core(core_fn, domain, degree, offset=0.0, scale=-1.0, anchor=1.0)


class VFn:
    """v(w) = psi(-w)^(1/r), principal branch."""

    def __init__(self, psi, r):
        self.psi, self.r = psi, float(r)
        self.domain = DomainInterval(-1.0, -psi.dom.lo)

    def __call__(self, w, depth=0):
        w = np.asarray(w, float)
        base = (1 + w) * self.psi.q(-w, depth)
        with np.errstate(invalid="ignore"):
            return np.where(base >= 0, np.abs(base) ** (1 / self.r), np.nan)

    def deriv(self, w):
        w = np.asarray(w, float)
        base = self.psi(-w)
        return (1 / self.r) * base ** (1 / self.r - 1) * (-self.psi.deriv(-w))


def build_v(psi, r):
    """v(w) = psi(-w)^(1/r); rejects psi with a sign change inside (-1/lam, 1)."""
    if isinstance(psi, AnalyticFn):
        psi = Psi(psi)
    lo = psi.dom.lo
    x = DomainInterval(lo, min(1.0, psi.dom.hi)).grid()[:-1]
    if np.any(psi(x) <= 0):
        raise RegimeError("psi is not positive left of 1", stage="build_v")
    return VFn(psi, r)


# ---------------------------------------------------------------- Koenigs

@dataclass
class FrameState:
    lam: float
    phi0: AnalyticFn
    a_frame: float
    map: FrameMap = None


def choose_window(lam, xi, hint, nu):
    """Working interval [-L, R] for a frame at lam (see module notes in fixpoint)."""
    R = 1 + 0.3 * min(xi - 1, 0.5) if np.isfinite(xi) else 1.15
    base = min(1.3 * lam, 0.5 * (lam + 1 / lam))
    if nu <= 1:
        t = lam ** (1 - nu)
        base = max(base, min(1.1 * t, 0.5 * (t + 1 / lam)))
    h = base if hint is None or not np.isfinite(hint) or hint >= 1 / lam else hint
    L = max(base, min(1.5 * h + 0.05, h + 0.35 * (1 / lam - h)))
    return min(L, 1 / lam - 0.2 * (1 / lam - base)), R


def grow_window(L, need, lam):
    cap = L + 0.5 * (1 / lam - L)
    if need is None or not np.isfinite(need):
        return min(2 * L + 0.05, cap)
    return min(max(1.2 * need + 0.02, 1.5 * L), cap)


def fit_phi0(fmap, domain, degree=DEFAULT_DEGREE):
    """Anchored fit phi0 = 1 + m (z - 1) k(z) with k(1) close to 1."""
    m = fmap.d1
    return fit_core(lambda z: fmap.quot(z) / m, domain, degree, offset=1.0, scale=m, anchor=1.0)


def conjugate_to_lambda(Phi, lam, params, degree=DEFAULT_DEGREE, window=None):
    """phi0 = h_{b,lam} o Phi o h_{lam,b} fitted on a working window of the lam frame.

    Returns a FrameState whose `map` evaluates phi0 anywhere Phi is known.
    """
    if not 0 < lam <= params.b * (1 + 1e-12):
        raise RegimeError(f"lambda = {lam} outside (0, b]", stage="conjugate")
    src = Phi if isinstance(Phi, FrameMap) else FnMap(Phi, params.b)
    af = a_frame(lam, params)
    if lam == src.lam and isinstance(Phi, AnalyticFn):
        return FrameState(lam, Phi, af, src)
    cm = ConjMap(src, lam)
    if window is None:
        L, R = choose_window(lam, cm.xi, None, params.nu)
        window = DomainInterval(-L, R)
    try:
        phi0 = fit_phi0(cm, window, degree)
    except EvaluationError as e:
        raise EvaluationError(str(e), stage="conjugate") from e
    return FrameState(lam, phi0, af, cm)


def koenigs_linearizer(frame, multiplier, max_iter=10_000, tol=1e-14, check_tol=1e-10,
                       degree=None):
    """Normalized linearizer psi of phi0 at its fixed point 1.

    psi = h / h(0) with h(z) = lim m^{-n} (phi0^n(z) - 1), evaluated as the
    product h(z) = (z - 1) prod_n k(phi0^n(z)), k = (phi0 - 1)/(m (z - 1)).

    Parameters
    ----------
    frame : FrameState
        Holds phi0 (an AnalyticFn); anchored form is used when available.
    multiplier : float
        phi0'(1), in (0, 1).

    Returns
    -------
    AnalyticFn
        psi in the anchored form (1 - z) q(z); `.schroeder_residual` is set.
    """
    if not 0 < multiplier < 1:
        raise LinearizationError(f"multiplier {multiplier} outside (0, 1)", stage="koenigs")
    f = frame.phi0
    dom = f.domain
    if f.anchor == 1.0 and f.offset == 1.0:
        kraw = lambda x: f.scale * f.core(x)
    else:
        kraw = lambda x: f.dd(x, np.ones_like(x))
    k1 = float(kraw(np.array([1.0]))[0])
    m = k1
    if abs(m / multiplier - 1) > 1e-6:
        raise LinearizationError(f"phi0'(1) = {m} differs from multiplier {multiplier}", stage="koenigs")
    k = lambda x: kraw(x) / k1
    deg = degree or f.degree
    nodes = dom.from_t(np.cos(np.pi * np.arange(deg + 1) / deg))
    x = np.append(nodes, 0.0)
    d = x - 1
    P = np.ones_like(x)
    for n in range(max_iter):
        kk = k(np.clip(1 + d, dom.lo, dom.hi))
        if not np.all(np.isfinite(kk)):
            raise LinearizationError("orbit left the frame window", stage="koenigs")
        P *= kk
        d = d * m * kk
        if np.max(np.abs(kk - 1)) < tol and n > 0:
            break
    else:
        raise LinearizationError(f"no convergence in {max_iter} iterations", stage="koenigs")
    qv = P[:-1] / P[-1]
    from .analytic_core import lobatto_coeffs
    psi = AnalyticFn(dom, lobatto_coeffs(qv), None, 0.0, -1.0, 1.0)
    g = dom.grid()
    y = 1 + (g - 1) * m * k(g)
    res = float(np.max(np.abs(1 - g) * np.abs(psi.core(g) - k(g) * psi.core(y))))
    psi.schroeder_residual = res
    psi.iterations = n + 1
    if not res < check_tol:
        raise LinearizationError(f"Schroeder residual {res:.2e} above {check_tol:.0e}", stage="koenigs",
                                 payload={"residual": res})
    return psi


# ---------------------------------------------------------------- z1 and phi

def _orbit(v, s, lam, nu, k, x0, edge):
    """x_k(s) = (s lam^{1-nu} v)^k (x0) for an array of s; inf once a point passes `edge`."""
    s = np.atleast_1d(np.asarray(s, float))
    c = s * lam ** (1 - nu)
    w = np.full(s.shape, float(x0))
    for _ in range(k):
        esc = ~(w <= edge)
        w = np.where(esc, np.inf, c * v(np.where(esc, 0.0, w)))
        w = np.where(np.isfinite(w), w, np.inf)
    return w


def _orbit_deriv(v, s, lam, nu, k, x0):
    c0 = lam ** (1 - nu)
    w, dw = x0, 0.0
    for _ in range(k):
        vw = float(v(np.array([w]))[0])
        dv = float(v.deriv(np.array([w]))[0])
        w, dw = s * c0 * vw, c0 * vw + s * c0 * dv * dw
    return w, dw


def solve_z1(v, lam, params, edge=None):
    """Unique z1 with (z1 lam^{1-nu} v)^p (lam) = lam^{1-nu} and its orbit zeta_0..zeta_{p+1}.

    Bisection on (s*, min(1, s1)) with s* = lam^nu / v(lam) and
    s1 = lam^{nu-2} / v(lam); orbits leaving the evaluable window count as
    overshooting, which reproduces the s_j bracket chain for p >= 2, nu > 1.
    """
    p, nu = params.p, params.nu
    edge = -v.psi.dom.lo if edge is None else edge
    vl = float(v(np.array([lam]))[0])
    if not (np.isfinite(vl) and vl > 0):
        raise SolverError("v(lambda) is not evaluable", stage="solve_z1")
    target = lam ** (1 - nu)
    if p == 1:
        z1 = 1 / vl
    else:
        s_star = lam ** nu / vl
        s_hi = min(1.0, lam ** (nu - 2) / vl)
        f = lambda s: _orbit(v, s, lam, nu, p, lam, edge) - target
        lo, hi = s_star, s_hi
        if not f(hi)[0] > 0:
            raise SolverError("bracket construction failed (no overshoot at the upper end)",
                              stage="solve_z1", payload={"s_star": s_star, "s_hi": s_hi})
        # multisection: bisection with 32 probes per sweep
        while hi - lo > 1e-15 * hi:
            probes = np.linspace(lo, hi, 34)[1:-1]
            over = f(probes) > 0
            i = int(np.argmax(over)) if over.any() else len(probes)
            lo_new = probes[i - 1] if i > 0 else lo
            hi_new = probes[i] if i < len(probes) else hi
            if lo_new == lo and hi_new == hi:
                break
            lo, hi = lo_new, hi_new
        z1 = 0.5 * (lo + hi)
        xp, dxp = _orbit_deriv(v, z1, lam, nu, p, lam)
        if np.isfinite(xp) and dxp > 0:
            zn = z1 - (xp - target) / dxp
            if lo - 1e-15 <= zn <= hi + 1e-15:
                z1 = zn
    K = z1 * lam ** (1 - nu)
    zeta = [lam]
    for _ in range(p - 1):
        zeta.append(K * float(v(np.array([zeta[-1]]))[0]))
    # zeta_p = lam^{1-nu} holds by definition of z1; store it exactly
    zeta.append(target)
    zeta.append(K * float(v(np.array([target]))[0]))
    return float(z1), np.array(zeta)


class StructMap(FrameMap):
    """phi(z) = lam^{nu-1} u^p(lam z) carried structurally by (psi, z1, orbit).

    quot(z) follows the difference chain e_{j+1} = u(w_j) - u(zeta_j) with
    e_0 = lam (z - 1), which never forms the cancelling difference phi - 1.
    """

    def __init__(self, psi, lam, z1, zeta, params):
        self.psi, self.lam, self.z1 = psi, float(lam), float(z1)
        self.zeta = np.asarray(zeta, float)
        self.p, self.r, self.nu = params.p, params.r, params.nu
        self.K = self.z1 * self.lam ** (1 - self.nu)
        self.psi_zeta = psi(-self.zeta[:self.p])
        self.hint = float(self.zeta[self.p - 1]) if self.p >= 2 else float(self.zeta[0])
        if self.p >= 2 and self.nu > 1:
            self.xi = float(self.zeta[1] / self.lam)
        else:
            self.xi = self.lam ** -2

    def chain(self, z, depth=0):
        z = np.asarray(z, float)
        rho = np.full(z.shape, self.lam)
        ws = []
        w = self.lam * z
        for j in range(self.p):
            ws.append(w)
            a = self.psi(-w, depth)
            dpsi = self.psi.dd(-w, np.full(z.shape, -self.zeta[j]), depth)
            pq = powdiff_quot(a, np.full(z.shape, self.psi_zeta[j]), 1 / self.r)
            rho = -self.K * pq * dpsi * rho
            w = self.zeta[j + 1] + (z - 1) * rho
        ws.append(w)
        return rho, ws

    def quot(self, z, depth=0):
        z = np.asarray(z, float)
        rho, _ = self.chain(z, depth)
        out = self.lam ** (self.nu - 1) * rho
        return np.where(z >= -(1 + 1e-14) / self.lam, out, np.nan)

    def u_check(self, w, depth=0):
        return self.K * VFn(self.psi, self.r)(w, depth)


def build_phi(v, z1, lam, params, zeta=None):
    """phi = lam^{nu-1} (z1 lam^{1-nu} v)^p o lam as a structural frame map."""
    if zeta is None:
        _, zeta = solve_z1(v, lam, params)
    return StructMap(v.psi, lam, z1, zeta, params)


def chain_product(psi, zeta, r, p):
    """phi'(1) = prod_j -zeta_j psi'(-zeta_j) / (r psi(-zeta_j))."""
    z = np.asarray(zeta[:p], float)
    return float(np.prod(-z * psi.deriv(-z) / (r * psi(-z))))


# ---------------------------------------------------------------- the step

@dataclass
class StepResult:
    lam: float
    multiplier: float
    psi: Psi
    z1: float
    zeta: np.ndarray
    phi: StructMap
    phi0: AnalyticFn
    window: DomainInterval
    schroeder_residual: float
    truncated: bool = False
    info: dict = field(default_factory=dict)


def extract_lambda(Phi, params):
    """lambda = Phi'(1)^{1/(r nu)} with the regime check Phi'(1) in (0, b^{r nu}]."""
    d1 = Phi.d1 if isinstance(Phi, FrameMap) else float(Phi.deriv(np.array([1.0]))[0])
    cap = params.b ** params.rnu
    if not (d1 > 0 and d1 <= cap * (1 + 1e-10)):
        raise RegimeError(f"Phi'(1) = {d1:.6g} outside (0, b^(r nu) = {cap:.6g}]", stage="extract_lambda",
                          payload={"d1": d1})
    return min(d1 ** (1 / params.rnu), params.b)


def renormalize(F, params, degree=DEFAULT_DEGREE, lambda1=None, max_attempts=40):
    """One application of B (or of its truncation when lambda1 is given) in moving frames.

    F is a FrameMap in frame F.lam.  The result's phi lives in frame lam, the
    new scaling parameter.  Since h_{b,t} o h_{s,b} = h_{s,t}, chaining these
    steps is the same as iterating the fixed-frame operator.
    """
    rnu = params.rnu
    m_in = F.d1
    if not (np.isfinite(m_in) and m_in > 0):
        raise RegimeError(f"derivative at 1 is {m_in}", stage="renormalize")
    lam = m_in ** (1 / rnu)
    if lam > params.b * (1 + 1e-9):
        raise RegimeError(f"lambda = {lam:.6g} exceeds b = {params.b:.6g}", stage="renormalize")
    lam = min(lam, params.b)
    truncated = lambda1 is not None and m_in < lambda1 ** rnu
    post = None
    if truncated:
        lam = float(lambda1)
        post = make_theta(m_in, lambda1 ** rnu)
    cm = ConjMap(F, lam)
    L, R = choose_window(lam, cm.xi, F.hint, params.nu)
    last_err = None
    for attempt in range(max_attempts):
        dom = DomainInterval(-L, R)
        try:
            phi0 = fit_phi0(cm, dom, degree)
            m = phi0.scale * float(phi0.core(np.array([1.0]))[0])
            fs = FrameState(lam, phi0, a_frame(lam, params), cm)
            psi_fn = koenigs_linearizer(fs, m, check_tol=1e-6)
            res = psi_fn.schroeder_residual
            if post is not None:
                base = psi_fn
                psi_fn = fit_core(lambda x: _zero_fixing_ratio(post, base(x)) * base.core(x), dom, degree,
                                  offset=0.0, scale=-1.0, anchor=1.0)
            psi = Psi(psi_fn, cm, m, post)
            v = VFn(psi, params.r)
            z1, zeta = solve_z1(v, lam, params, edge=L)
            K = z1 * lam ** (1 - params.nu)
            w = lam * R
            for _ in range(params.p - 1):
                w = K * float(v(np.array([w]))[0])
            need = w
        except (EvaluationError, LinearizationError, SolverError) as e:
            last_err, need = e, None
        else:
            if np.isfinite(need) and need <= L:
                phi = StructMap(psi, lam, z1, zeta, params)
                return StepResult(lam, m, psi, z1, zeta, phi, phi0, dom, res, truncated,
                                  dict(L=L, R=R, attempts=attempt + 1, need=need,
                                       tail=phi0.tail_bound, psi_tail=psi_fn.tail_bound))
        L_new = grow_window(L, need, lam)
        if L_new <= L * (1 + 1e-12):
            break
        L = L_new
    if last_err is not None:
        raise last_err
    raise EvaluationError("could not find a window containing the orbit", stage="renormalize")


def apply_B(Phi, params, degree=DEFAULT_DEGREE):
    """B(b, r, p, nu) Phi for Phi an AnalyticFn on a real interval of the b frame."""
    extract_lambda(Phi, params)
    F = Phi if isinstance(Phi, FrameMap) else FnMap(Phi, params.b)
    step = renormalize(F, params, degree)
    return to_b_frame(step, params, degree), step


def apply_N(Phi, params, degree=DEFAULT_DEGREE):
    """Truncated operator: B unless Phi'(1) < lambda1^{r nu}, then lambda is clamped."""
    if params.regime != PGE2_HIGH_NU or params.lambda1 is None:
        raise RegimeError("apply_N needs the p >= 2, nu > 1 regime with lambda1 set")
    F = Phi if isinstance(Phi, FrameMap) else FnMap(Phi, params.b)
    step = renormalize(F, params, degree, lambda1=params.lambda1)
    return to_b_frame(step, params, degree), step


def to_b_frame(step, params, degree=DEFAULT_DEGREE):
    """Fit h_{b,lam}^{-1} o phi o h_{b,lam} on the image of a wide lam-frame interval."""
    lam, b = step.lam, params.b
    L = step.window.lo * -1
    LK = min(L + 0.5 * (1 / lam - L), 3 * L + 1)
    R = step.window.hi
    cm = ConjMap(step.phi, b)
    if lam == b:
        lo, hi = -LK, R
    else:
        H = make_h(lam, b)
        lo, hi = float(H(-LK)), float(H(R))
    dom = DomainInterval(lo, hi)
    m = cm.d1
    return fit_core(lambda y: cm.quot(y) / m, dom, degree, offset=1.0, scale=m, anchor=1.0)


def seed_map(params):
    """chi_{b, r nu} as an exact frame map."""
    b = params.b
    return HomographyMap(chi_homography(b, params.rnu), b, 1 / b ** 2)


def analyticity_endpoint(phi, params, L=None):
    """Right end xi_max of the domain of phi and the chain xi_1 < ... < xi_p."""
    lam, p = phi.lam, params.p
    inv = 1 / lam
    u = lambda w: float(phi.u_check(np.array([w]))[0])
    if p == 1 or u(inv) <= inv:
        return lam ** -2, np.array([lam ** -2] * 1)
    xi = [lam ** -2]
    top = inv
    for j in range(1, p):
        # lam xi_{p-j} = u^{-j}(1/lam), found in (1, xi_{p-j+1})
        g = lambda y: _iterate(u, lam * y, j) - inv
        lo, hi = 1.0, xi[-1]
        glo = g(lo)
        if not glo < 0:
            raise EvaluationError("xi chain inversion failed", stage="xi_max")
        while hi - lo > 1e-14 * hi:
            mid = 0.5 * (lo + hi)
            gm = g(mid)
            if np.isfinite(gm) and gm < 0:
                lo = mid
            else:
                hi = mid
        xi.append(0.5 * (lo + hi))
    xi = np.array(xi[::-1])
    return float(xi[0]), xi


def _iterate(f, w, k):
    for _ in range(k):
        w = f(w)
        if not np.isfinite(w):
            return np.inf
    return w
