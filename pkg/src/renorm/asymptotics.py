"""Large-r structure of fixed points for 0 < nu <= 1 and p >= 2.

From a solution bundle we build
    V(zeta) = f(zeta^(1/r)),  f(z) = lam^(-r nu) psi(lam^(nu-1) u_check^(p-1)(K z)),
    W = V o V,  V_hat(zeta) = 1 - V(1 - zeta),  W_hat = V_hat o V_hat,
    H_pm(w) = psi(+-exp(beta w)),  beta = log(1/lam),
    S_pm(zeta) = y0 tau^(1-nu) H_pm(log zeta / log(1/tau)),
with K = z1 lam^(1-nu), tau = lam^r, y0 = z1^r, so that psi(z) = V(psi(-lam z)).
Derivatives up to order three are propagated as jets through Chebyshev fits of
f and of psi on a wide interval, which gives Schwarzians without differencing.
"""
from dataclasses import dataclass

import numpy as np

from .analytic_core import DomainInterval, fit
from .errors import EvaluationError, RegimeError
from .verifier import DEFAULT_TOL, BoundsReport

E = np.e
C_PRIME = 1 / 6
C_INV = C_PRIME / (1 + 3 * C_PRIME)
K_LOW = 1 / (6 * E + 3 * (2 * E - 1) ** 2)
FIT_DEGREE = 160
EDGE = 1e-4


# ---------------------------------------------------------------- jets

def _compose_jet(outer, inner):
    """Jet of F o g up to order 3 from the jet of F at g and the jet of g."""
    F0, F1, F2, F3 = outer
    g0, g1, g2, g3 = inner
    return np.array([F0, F1 * g1, F2 * g1 ** 2 + F1 * g2, F3 * g1 ** 3 + 3 * F2 * g1 * g2 + F1 * g3])


def _fn_jet(fn, x):
    return np.array([fn(x)] + [fn.deriv(x, k) for k in (1, 2, 3)])


class JetFn:
    """Real function with exact derivatives up to order 3.

    `value` evaluates the function (possibly outside the fitted range through
    the underlying extension); `jet` returns value and first three derivatives.
    """

    def __init__(self, value, jet, domain=None):
        self._value, self._jet, self.domain = value, jet, domain

    def __call__(self, x):
        return self._value(np.asarray(x, float))

    def jet(self, x):
        return self._jet(np.asarray(x, float))

    def deriv(self, x, k=1):
        return self.jet(x)[k]

    def schwarzian(self, x):
        _, d1, d2, d3 = self.jet(x)
        return d3 / d1 - 1.5 * (d2 / d1) ** 2


def _root_jet(x, a):
    return np.array([x ** a, a * x ** (a - 1), a * (a - 1) * x ** (a - 2),
                     a * (a - 1) * (a - 2) * x ** (a - 3)])


def compose(F, G):
    """F o G as a JetFn."""
    return JetFn(lambda x: F(G(x)), lambda x: _compose_jet(F.jet(G(x)), G.jet(x)))


def reflect(F):
    """x -> 1 - F(1 - x)."""
    def jet(x):
        j = F.jet(1 - x)
        return np.array([1 - j[0], j[1], -j[2], j[3]])
    return JetFn(lambda x: 1 - F(1 - x), jet)


def increasing_inverse(F, y, lo, hi, iters=200):
    """Vectorized bisection for F(x) = y with F increasing on [lo, hi]."""
    y = np.asarray(y, float)
    a, b = np.full(y.shape, float(lo)), np.full(y.shape, float(hi))
    for _ in range(iters):
        m = 0.5 * (a + b)
        up = F(m) < y
        a, b = np.where(up, m, a), np.where(up, b, m)
        if np.all(b - a <= 1e-16 * np.maximum(np.abs(b), 1e-300)):
            break
    return 0.5 * (a + b)


# ---------------------------------------------------------------- bundle

@dataclass
class AsymptoticBundle:
    bundle: object
    f: object
    psi_wide: object
    V: JetFn
    W: JetFn
    V_hat: JetFn
    W_hat: JetFn
    H_plus: JetFn
    H_minus: JetFn
    S_plus: JetFn
    S_minus: JetFn
    alpha: float
    beta: float
    tau: float
    y0: float
    w_orbit: np.ndarray
    consistency: float

    @property
    def lam(self):
        return self.bundle.lam

    @property
    def params(self):
        return self.bundle.params

    def summary(self):
        return dict(r=self.params.r, p=self.params.p, nu=self.params.nu, **{"lambda": self.lam},
                    alpha=self.alpha, beta=self.beta, tau=self.tau, y0=self.y0,
                    psi_minus_one=float(self.H_minus(0.0)), V_at_0=float(self.V(0.0)),
                    w_orbit=[float(w) for w in self.w_orbit], consistency=self.consistency)


def _f_exact(bundle):
    prm = bundle.params
    lam, K, r, nu, p = bundle.lam, bundle.K, prm.r, prm.nu, prm.p
    psi = bundle.psi_view

    def f(z):
        x = K * np.asarray(z, float)
        for _ in range(p - 1):
            x = K * np.abs(psi(-x)) ** (1 / r)
        return psi(lam ** (nu - 1) * x) / lam ** (r * nu)
    return f


def build(bundle, degree=FIT_DEGREE, n=401):
    """Derived functions V, W, H_pm, S_pm of a solution with 0 < nu <= 1, p >= 2.

    Raises RegimeError outside that range and EvaluationError when the
    consistency relations H_pm(w) = V(H_mp(w-1)) = W(H_pm(w-2)) fail on a grid.
    """
    prm = bundle.params
    p, r, nu = prm.p, prm.r, prm.nu
    if not (0 < nu <= 1 and p >= 2):
        raise RegimeError(f"large-r diagnostics need 0 < nu <= 1 and p >= 2 (got p={p}, nu={nu})",
                          stage="asymptotics")
    lam, K = bundle.lam, bundle.K
    psi = bundle.psi_view
    beta = float(np.log(1 / lam))
    tau, y0 = bundle.tau, bundle.y0
    alpha = float(psi(np.array([-lam]))[0])
    psi_m1 = float(psi(np.array([-1.0]))[0])

    # psi on a wide interval inside its analyticity domain (-1/lam, 1/lam^2)
    wide = DomainInterval(-(1 + 0.5 * (1 / lam - 1)), 1 + 0.5 * (1 / lam ** 2 - 1))
    psi_wide = fit(lambda x: psi(x), wide, degree).with_extension(lambda x: psi(x))

    # f on an interval covering the range of V's arguments, inside (-1/K, 1/(K lam))
    f_ex = _f_exact(bundle)
    V0 = float(f_ex(np.array([0.0]))[0])
    hi = (1.05 * max(psi_m1, alpha, V0, 1.0)) ** (1 / r)
    hi = min(hi, 0.5 * (hi + 1 / (K * lam)))
    f = fit(f_ex, DomainInterval(-0.25 / K, hi), degree).with_extension(f_ex)

    V = JetFn(lambda x: f(np.abs(x) ** (1 / r)),
              lambda x: _compose_jet(_fn_jet(f, x ** (1 / r)), _root_jet(x, 1 / r)),
              DomainInterval(0.0, hi ** r))
    W = compose(V, V)
    V_hat, W_hat = reflect(V), reflect(W)

    def H(sign):
        def val(w):
            return psi_wide(sign * np.exp(beta * w))

        def jet(w):
            e = np.exp(beta * w)
            inner = sign * np.array([e, beta * e, beta ** 2 * e, beta ** 3 * e])
            return _compose_jet(_fn_jet(psi_wide, sign * e), inner)
        return JetFn(val, jet)

    H_plus, H_minus = H(1.0), H(-1.0)
    Lt = np.log(1 / tau)
    pref = y0 * tau ** (1 - nu)

    def S(Hs):
        def val(z):
            return pref * Hs(np.log(z) / Lt)

        def jet(z):
            inner = np.array([np.log(z) / Lt, 1 / (Lt * z), -1 / (Lt * z ** 2), 2 / (Lt * z ** 3)])
            return pref * _compose_jet(Hs.jet(np.log(z) / Lt), inner)
        return JetFn(val, jet)

    zeta = bundle.zeta[:p]
    w_orbit = np.log(zeta) / beta
    ab = AsymptoticBundle(bundle, f, psi_wide, V, W, V_hat, W_hat, H_plus, H_minus, S(H_plus),
                          S(H_minus), alpha, beta, tau, y0, w_orbit, np.nan)
    ab.consistency = consistency_defect(ab, n)
    if not ab.consistency < 1e-6:
        raise EvaluationError(f"H/V/W consistency defect {ab.consistency:.3e}", stage="asymptotics")
    return ab


def consistency_defect(ab, n=401):
    """Sup defect of H_pm(w) = V(H_mp(w-1)) = W(H_pm(w-2)) on w in [-6, 0.9]."""
    w = np.linspace(-6.0, 0.9, n)
    d = 0.0
    for Hs, Ho in ((ab.H_plus, ab.H_minus), (ab.H_minus, ab.H_plus)):
        h = Hs(w)
        d = max(d, np.max(np.abs(h - ab.V(Ho(w - 1)))), np.max(np.abs(h - ab.W(Hs(w - 2)))))
    return float(d)


# ---------------------------------------------------------------- bounds

def _grid_ge(rep, name, label, x, lhs, rhs):
    """Record min over the grid of lhs - rhs >= 0 at its worst point."""
    lhs, rhs = np.asarray(lhs, float), np.asarray(rhs, float)
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
    m = np.where(np.isfinite(lhs) & np.isfinite(rhs), (lhs - rhs) / scale, -np.inf)
    i = int(np.argmin(m))
    e = rep.ge(name, f"{label} (worst at {x[i]:.6g})", lhs[i], rhs[i])
    return e


def _open_grid(lo, hi, n):
    """n points of (lo, hi) with a relative margin EDGE at both ends."""
    d = EDGE * (hi - lo)
    return np.linspace(lo + d, hi - d, n)


def check_bounds(ab, tol=DEFAULT_TOL, n=2001):
    """Scalar and function bounds of the large-r analysis evaluated on grids."""
    prm = ab.params
    lam, p, r, nu = ab.lam, prm.p, prm.r, prm.nu
    rep = BoundsReport(tol)

    z = _open_grid(0.0, 1.0, n)
    _grid_ge(rep, "W_hat_lower", "W_hat(z) >= z (1 + z^2/6) on (0, 1)", z, ab.W_hat(z), z * (1 + C_PRIME * z ** 2))

    y = _open_grid(0.0, 1.0, n)
    winv = increasing_inverse(ab.W_hat, y, 0.0, 1.0 - 1e-12)
    _grid_ge(rep, "W_hat_inverse_upper", "W_hat^-1(y) <= y (1 - y^2/9) on [0, 1)", y,
             y * (1 - C_INV * y ** 2), winv)

    z = _open_grid(1.0, ab.alpha, n)
    _grid_ge(rep, "W_lower", "W(z) - 1 >= (z-1)(1 + (z-1)^2/(6e)) on (1, alpha)", z,
             ab.W(z) - 1, (z - 1) * (1 + (z - 1) ** 2 / (6 * E)))

    psi_m1 = float(ab.H_minus(np.array([0.0]))[0])
    rep.le("psi_minus_one", "psi(-1) <= 2 psi(-lambda)", psi_m1, 2 * ab.alpha)
    rep.le("alpha_upper_2", "2 psi(-lambda) <= 2 exp(lambda)", 2 * ab.alpha, 2 * np.exp(lam))
    rep.ge("alpha_lower", "alpha = psi(-lambda) >= 1 + lambda", ab.alpha, 1 + lam)
    rep.le("alpha_upper", "alpha <= exp(lambda)", ab.alpha, np.exp(lam))
    rep.ge("y0_lower", "y0 >= 1/(2e)", ab.y0, 1 / (2 * E))
    rep.le("y0_upper", "y0 <= 1/(1 + lambda)", ab.y0, 1 / (1 + lam))

    w = np.linspace(-40.0, 0.0, n)
    _grid_ge(rep, "H_plus_hat_upper", "1 - H_plus(w) <= (1 - w/9)^(-1/2) for w <= 0", w,
             (1 - C_INV * w) ** -0.5, 1 - ab.H_plus(w))

    w = np.linspace(-1.0, 0.0, n)
    jm = ab.H_minus.jet(w)
    _grid_ge(rep, "H_minus_log_derivative", "H_minus'/H_minus >= k lam^3/(2(1+lam)) on [-1, 0]", w,
             jm[1] / jm[0], np.full(w.shape, K_LOW * lam ** 3 / (2 * (1 + lam))))
    w = np.linspace(-40.0, 0.0, n)
    jm = ab.H_minus.jet(w)
    # H_minus - 1 as x dd(x, 0) with psi(0) = 1 exact; the fitted value at 0 carries rounding
    x = -np.exp(ab.beta * w)
    hm1 = x * ab.psi_wide.dd(x, np.zeros_like(x))
    _grid_ge(rep, "H_minus_derivative", "H_minus' >= k (H_minus - 1)^3 / 2 for w <= 0", w,
             jm[1], K_LOW * hm1 ** 3 / 2)

    if r > 3 * p / nu:
        t = ab.tau
        rep.ge("tau_lower", "tau^(nu/p - 3/r) log(1/tau) >= k/4", t ** (nu / p - 3 / r) * np.log(1 / t), K_LOW / 4)
    rep.le("consistency", "H_pm = V o H_mp(. - 1) = W o H_pm(. - 2)", ab.consistency, 1e3 * tol, absolute=True)
    return rep


def invariants(ab, tol=DEFAULT_TOL, n=2001):
    """Normalization, convexity and Schwarzian properties of V, W and W_hat."""
    prm = ab.params
    lam, nu = ab.lam, prm.nu
    rep = BoundsReport(tol)
    j1 = ab.V.jet(np.array([1.0]))[:, 0]
    rep.le("V_at_1", "V(1) = 1", abs(j1[0] - 1), 1e3 * tol, absolute=True)
    rep.le("V_prime_at_1", "V'(1) = -1/lambda", abs(j1[1] * lam + 1), 1e3 * tol, absolute=True)
    f1 = ab.f.deriv(np.array([1.0]))[0]
    rep.le("f_prime_at_1", "f'(1) = -r/lambda", abs(f1 * lam / prm.r + 1), 1e3 * tol, absolute=True)

    zmax = ab.bundle.K ** -prm.r
    z = _open_grid(0.0, min(zmax, ab.V.domain.hi), n)
    j = ab.V.jet(z)
    _grid_ge(rep, "V_convex_lower", "-V''/V' >= (1 - nu)/z on (0, (z1 lam^(1-nu))^-r]", z,
             -j[2] / j[1], (1 - nu) / z)
    z = _open_grid(0.0, ab.alpha, n)
    j = ab.V.jet(z)
    _grid_ge(rep, "V_convex_upper", "-V''/V' <= 1/z on (0, alpha)", z, 1 / z, -j[2] / j[1])

    z = _open_grid(1.0, ab.alpha, n)
    _grid_ge(rep, "W_schwarzian", "SW(z) >= 1/z^2 on (1, alpha)", z, ab.W.schwarzian(z), 1 / z ** 2)
    z = _open_grid(0.0, 1.0, n)
    _grid_ge(rep, "W_hat_schwarzian", "SW_hat(z) >= 16 lam/(1+lam)^4 on (0, 1)", z,
             ab.W_hat.schwarzian(z), np.full(z.shape, 16 * lam / (1 + lam) ** 4))

    rep.ge("alpha_lower", "alpha >= 1 + lambda", ab.alpha, 1 + lam)
    rep.le("alpha_upper", "alpha <= exp(lambda)", ab.alpha, np.exp(lam))
    w = ab.w_orbit
    rep.ge("w_orbit_lower", "w_j >= -1", w.min(), -1.0)
    rep.le("w_orbit_upper", "w_j <= nu - 1", w.max(), nu - 1)
    rep.le("tau_upper", "tau <= 8^(-1/nu)", ab.tau, 8 ** (-1 / nu))
    return rep


# ---------------------------------------------------------------- limiting equation

def _S_exact(bundle, sign):
    prm = bundle.params
    pref = bundle.y0 * bundle.tau ** (1 - prm.nu)
    return lambda z: pref * bundle.psi_view(sign * np.asarray(z, float) ** (1 / prm.r))


def limit_residual(ab, n=257):
    """Sup-grid defect of S_pm(z) = tau^-nu S_+(tau^(nu-1) S_-^(p-1)(S_mp(tau z))).

    The grid is z = |x|^r for x on the solution window, the same points at
    which the functional equation residual of the bundle is measured.
    """
    b = ab.bundle
    prm = b.params
    p, r, nu, tau = prm.p, prm.r, prm.nu, ab.tau
    Sp, Sm = _S_exact(b, 1.0), _S_exact(b, -1.0)
    x = b.window.grid(n)
    d = 0.0
    for sign, Ss, Sx in ((1.0, Sp, Sm), (-1.0, Sm, Sp)):
        xs = np.abs(x[np.sign(x) == sign])
        z = xs ** r
        y = Sx(tau * z)
        for _ in range(p - 1):
            y = Sm(y)
        rhs = Sp(tau ** (nu - 1) * y) / tau ** nu
        lhs = Ss(z)
        if not np.all(np.isfinite(rhs)):
            raise EvaluationError("limiting equation leaves the domain of S", stage="limit_residual")
        d = max(d, float(np.max(np.abs(lhs - rhs))))
    return d


def family_differences(abs_, lo=0.05, hi=1.0, n=401):
    """Sup differences of consecutive S_pm on [lo, hi] for bundles ordered by r."""
    z = np.linspace(lo, hi, n)
    out = []
    for a, b in zip(abs_[:-1], abs_[1:]):
        dp = np.max(np.abs(a.S_plus(z) - b.S_plus(z)))
        dm = np.max(np.abs(a.S_minus(z) - b.S_minus(z)))
        out.append(dict(r_pair=(a.params.r, b.params.r), plus=float(dp), minus=float(dm)))
    return out


# ---------------------------------------------------------------- inverse-inequality scan

def inverse_inequality_scan(n_side=100, tol=1e-12):
    """Brute-force check of: z (1 + a' z^2) <= y <= m  implies  z <= y (1 - a y^2), a = a'/(1 + 3 a' m^2).

    Scans n_side^3 triples (a', m, y/m) on log/linear grids, taking the largest
    admissible z (the root of a' z^3 + z = y).  Returns (ok, min relative margin, count).
    """
    ap = np.logspace(-4, 4, n_side)
    m = np.logspace(-3, 3, n_side)
    t = np.linspace(1.0 / n_side, 1.0, n_side)
    A, M, T = np.meshgrid(ap, m, t, indexing="ij")
    A, M, T = A.ravel(), M.ravel(), T.ravel()
    y = T * M
    z = y.copy()
    for _ in range(200):
        g = A * z ** 3 + z - y
        step = g / (3 * A * z ** 2 + 1)
        z = z - step
        if np.all(np.abs(step) <= 1e-16 * z):
            break
    a = A / (1 + 3 * A * M ** 2)
    bound = y * (1 - a * y ** 2)
    margin = (bound - z) / y
    return bool(np.all(margin >= -tol)), float(margin.min()), int(margin.size)
