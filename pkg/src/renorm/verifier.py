"""Closed-form feasibility conditions, a-priori bounds and identities for solutions."""
from dataclasses import dataclass, field

import numpy as np

from .analytic_core import DomainInterval, e0_envelope_check
from .errors import DomainError, EvaluationError, RegimeError
from .renorm_ops import (LOW_NU, P1_HIGH_NU, PGE2_HIGH_NU, a_frame, analyticity_endpoint, b1, b3, b5,
                         b6, chain_product, feasibility_margin, lambda_floor)

DEFAULT_TOL = 1e-9


@dataclass
class Entry:
    name: str
    label: str
    lhs: float
    rhs: float
    margin: float
    passed: bool

    def to_dict(self):
        f = lambda x: float(x) if np.isfinite(x) else None
        return dict(name=self.name, label=self.label, lhs=f(self.lhs), rhs=f(self.rhs),
                    margin=f(self.margin), passed=self.passed)


@dataclass
class BoundsReport:
    """Signed margins of inequalities; `margin` is relative to max(|lhs|, |rhs|, 1)
    unless the entry was added with absolute=True."""
    tol: float = DEFAULT_TOL
    entries: list = field(default_factory=list)

    def le(self, name, label, lhs, rhs, absolute=False, tol=None):
        """Record lhs <= rhs."""
        lhs, rhs = float(lhs), float(rhs)
        scale = 1.0 if absolute else max(abs(lhs), abs(rhs), 1e-300)
        margin = (rhs - lhs) / scale if np.isfinite(lhs) and np.isfinite(rhs) else -np.inf
        t = self.tol if tol is None else tol
        self.entries.append(Entry(name, label, lhs, rhs, margin, bool(margin >= -t)))
        return self.entries[-1]

    def ge(self, name, label, lhs, rhs, **kw):
        """Record lhs >= rhs (stored in the same orientation)."""
        e = self.le(name, label, rhs, lhs, **kw)
        e.lhs, e.rhs = float(lhs), float(rhs)
        return e

    def flag(self, name, label, ok, value=np.nan):
        self.entries.append(Entry(name, label, float(value), np.nan, 0.0 if ok else -np.inf, bool(ok)))

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def failures(self):
        return [e for e in self.entries if not e.passed]

    def __len__(self):
        return len(self.entries)

    def to_dict(self):
        return dict(passed=self.passed, tol=self.tol, entries=[e.to_dict() for e in self.entries])


# ---------------------------------------------------------------- parameters only

def feasibility(p, r=None, nu=None):
    """(passed, margin) of the existence condition; accepts RegimeParams or (p, r, nu)."""
    if r is None:
        p, r, nu = p.p, p.r, p.nu
    m = feasibility_margin(p, r, nu)
    ok = m > 0 if nu <= 1 else r > 1
    return bool(ok), float(m)


def appendix_inequality(x):
    """(1 - x^2) log((1 + x^2)(1 + x)^2) + 4 x^2 log x, positive on (0, 1)."""
    x = np.asarray(x, float)
    if np.any((x <= 0) | (x >= 1)):
        raise DomainError("x must lie in the open interval (0, 1)")
    return (1 - x * x) * np.log((1 + x * x) * (1 + x) ** 2) + 4 * x * x * np.log(x)


def appendix_sweep(n=10_000):
    """Margins on n interior points of (0, 1); returns (all_positive, min_margin, points)."""
    x = (np.arange(1, n + 1) - 0.5) / n
    m = appendix_inequality(x)
    return bool(np.all(m > 0)), float(np.min(m)), x


def upper_threshold(params):
    s = params.rnu
    if params.regime == LOW_NU:
        return b1(s) if params.p >= 2 else b3(s)
    return b5(s) if params.regime == P1_HIGH_NU else b6(s)


def a_fixed(lam):
    """min{(1+lam)/2, 2 lam/(1-lam)}: reciprocal of the lower bound on zeta_1/lam."""
    return min((1 + lam) / 2, 2 * lam / (1 - lam))


# ---------------------------------------------------------------- bundle checks

def check_bounds(bundle, tol=DEFAULT_TOL):
    """Regime-appropriate a-priori bounds evaluated on a solution bundle."""
    prm = bundle.params
    p, r, nu, b = prm.p, prm.r, prm.nu, prm.b
    lam, z1, zeta = bundle.lam, bundle.z1, bundle.zeta
    rep = BoundsReport(tol)
    m = lam ** (r * nu)
    d1 = bundle.multiplier

    rep.le("lambda_upper", "lambda below the regime threshold", lam, upper_threshold(prm))
    rep.ge("lambda_lower", "lambda above the regime floor", lam, lambda_floor(prm))
    rep.le("multiplier_consistency", "phi'(1) = lambda^(r nu)", abs(d1 / m - 1), 1e3 * tol, absolute=True)
    rep.le("multiplier_schwarz", "lambda^(r nu) <= lambda (1 - lambda^nu) / (1 - lambda^2)",
           m, lam * (1 - lam ** nu) / (1 - lam ** 2))
    rep.le("multiplier_simple", "lambda^(r nu) <= lambda / (1 + lambda)", m, lam / (1 + lam))

    # orbit
    rep.ge("z1_lower_nu", "z1 > lambda^nu", z1, lam ** nu)
    rep.ge("u0_lower", "z1 lambda^(1-nu) > lambda", z1 * lam ** (1 - nu), lam)
    rep.le("z1_upper", "z1 < 1", z1, 1.0)
    for j in range(p):
        rep.ge(f"zeta_order_{j}", "zeta_j < zeta_(j+1)", zeta[j + 1], zeta[j])
    rep.le("zeta_p", "zeta_p = lambda^(1-nu)", abs(zeta[p] / lam ** (1 - nu) - 1), tol, absolute=True)
    if np.isfinite(zeta[p + 1]):
        rep.ge("zeta_p1", "zeta_(p+1) > zeta_p", zeta[p + 1], zeta[p])
    rep.ge("zeta1_vs_u0", "zeta_1 > z1 lambda^(1-nu)", zeta[1], z1 * lam ** (1 - nu))

    # chain product and its envelope bounds
    prod = chain_product(bundle.psi, zeta, r, p)
    rep.le("chain_product", "phi'(1) equals the orbit product", abs(prod / d1 - 1), 1e3 * tol, absolute=True)
    zj = zeta[:p]
    upper = np.prod(zj * (1 + lam) / (r * (1 + zj) * (1 - lam * zj)))
    rep.le("chain_upper_envelope", "phi'(1) <= prod zeta_j (1+lam) / (r (1+zeta_j)(1-lam zeta_j))", m, upper)
    if prm.regime == LOW_NU:
        e = 1 + (p - 1) * (1 - nu)
        if r * (1 - lam) > 1:
            rep.le("chain_upper_power", "phi'(1) <= lam^(1+(p-1)(1-nu)) (r(1-lam))^-p",
                   m, lam ** e * (r * (1 - lam)) ** -p)
        lower = np.prod(zj * (1 - b) / (r * (1 + zj) * (1 + b * zj)))
        rep.ge("chain_lower_envelope", "phi'(1) >= prod zeta_j (1-b) / (r (1+zeta_j)(1+b zeta_j))", m, lower)
        c = (1 - b) ** 2 / (4 * r * (1 + b))
        rep.ge("chain_lower_power", "phi'(1) >= c^p lam^(1+(p-1)(1-nu))", m, c ** p * lam ** e)
        zlow = ((1 - lam ** (2 - nu)) / (1 + lam ** (1 - nu))) ** (1 / r)
        rep.ge("z1_envelope", "z1 >= ((1-lam^(2-nu))/(1+lam^(1-nu)))^(1/r)", z1, zlow)
        rep.ge("z1_half", "z1 > (1 - lam)/2", z1, (1 - lam) / 2)
        if p >= 2:
            rep.le("multiplier_Z1", "phi'(1) <= lam / ((1+lam)(1+sqrt lam)^2)",
                   m, lam / ((1 + lam) * (1 + np.sqrt(lam)) ** 2))
            rep.le("multiplier_eighth", "lambda^(r nu) < 1/8", m, 0.125)
            rep.ge("rnu_lower", "r nu >= (1+lam)/(1-lam)", r * nu, (1 + lam) / (1 - lam))
            rep.le("power_bound", "lam^(r nu - 1 - (p-1)(1-nu)) <= (1+lam)^-p",
                   lam ** (r * nu - 1 - (p - 1) * (1 - nu)), (1 + lam) ** -p)
        else:
            rep.le("multiplier_p1", "phi'(1) <= lam / (1 + lam)", m, lam / (1 + lam))
    elif prm.regime == P1_HIGH_NU:
        a0 = a_frame(lam, prm)
        rep.ge("chain_lower_p1", "phi'(1) >= lam (1-a0) / (r (1+lam)(1+lam a0))",
               m, lam * (1 - a0) / (r * (1 + lam) * (1 + lam * a0)))
        rep.ge("u0_half", "z1 lambda^(1-nu) >= ((1-lam)/2)^(1/r)", z1 * lam ** (1 - nu), ((1 - lam) / 2) ** (1 / r))
    else:
        a = a_fixed(lam)
        rep.ge("zeta1_over_lambda", "zeta_1 / lam >= 1 / a(lam)", zeta[1] / lam, 1 / a)
        rep.ge("zeta1_lower", "zeta_1 >= 2 lam / (1 + lam)", zeta[1], 2 * lam / (1 + lam))
        rep.ge("u0_half", "z1 lambda^(1-nu) >= ((1-lam)/2)^(1/r)", z1 * lam ** (1 - nu), ((1 - lam) / 2) ** (1 / r))
        rep.le("multiplier_Z", "phi'(1) <= (1+3 lam) / (2 + 2 lam + lam^2)", m,
               (1 + 3 * lam) / (2 + 2 * lam + lam * lam))
        if lam <= 1 / 7:
            rep.ge("chain_lower_small", "phi'(1) > lam (6 r)^-p", m, lam * (6 * r) ** -p)
        else:
            lower = lam ** p * (1 - a) / (r * (1 + lam) * (1 + a * lam)) \
                * ((1 - a) / (r * (1 + lam) * (lam + a))) ** (p - 1)
            rep.ge("chain_lower_a", "phi'(1) >= chain lower bound with c = a(lam)", m, lower)

    # envelope of psi
    env = e0_envelope_check(bundle.psi, lam, a_frame(lam, prm), tol=max(tol, 1e3 * bundle.psi.tail_bound))
    rep.flag("psi_envelope", "psi sandwich and log-derivative envelopes", env.passed,
             min(env.worst_sandwich, env.worst_logderiv))
    g = DomainInterval(bundle.window.lo, 1.0).grid()[:-1]
    rep.flag("psi_positive", "psi > 0 left of 1", bool(np.all(bundle.psi(g) > 0)), float(np.min(bundle.psi(g))))
    # normalization
    rep.le("psi_at_0", "psi(0) = 1", abs(bundle.psi(np.array([0.0]))[0] - 1), tol, absolute=True)
    rep.le("psi_at_1", "psi(1) = 0", abs(bundle.psi(np.array([1.0]))[0]), tol, absolute=True)
    rep.le("tau", "tau = lambda^r", abs(bundle.tau - lam ** r), 1e-15 * max(1, bundle.tau), absolute=True)
    rep.le("residual", "functional equation residual", bundle.residual, 1e3 * tol, absolute=True)
    return rep


# ---------------------------------------------------------------- domains and identities

def xi_max(bundle, tol=DEFAULT_TOL):
    """(xi_max, chain) with the consistency checks zeta_1/lam <= xi_max and zeta_j <= lam xi_j."""
    prm = bundle.params
    x, chain = analyticity_endpoint(bundle.phi_map, prm)
    lam, zeta = bundle.lam, bundle.zeta
    if not zeta[1] / lam <= x * (1 + tol):
        raise EvaluationError(f"zeta_1/lambda = {zeta[1] / lam} exceeds xi_max = {x}", stage="xi_max")
    if len(chain) == prm.p:
        for j in range(1, prm.p):
            if not zeta[j] <= lam * chain[j - 1] * (1 + tol):
                raise EvaluationError(f"zeta_{j} exceeds lambda xi_{j}", stage="xi_max")
    return x, chain


def psi_left_end(bundle):
    """psi(-1/lam) through the functional equation, using u(1) = 0 exactly."""
    prm = bundle.params
    lam = bundle.lam
    w = 0.0
    for _ in range(prm.p - 1):
        w = float(bundle.u_check(np.array([w]))[0])
    y = lam ** (prm.nu - 1) * w
    return float(bundle.psi(np.array([y]))[0]) / lam ** prm.rnu


def psi_at_xi(bundle):
    """psi(zeta_1/lam) through the functional equation, using zeta_p = lam^(1-nu) exactly."""
    prm = bundle.params
    lam = bundle.lam
    zp1 = bundle.K * psi_left_end(bundle) ** (1 / prm.r) if prm.nu == 2 else bundle.zeta[prm.p + 1]
    y = lam ** (prm.nu - 1) * zp1
    return float(bundle.psi(np.array([y]))[0]) / lam ** prm.rnu


def _u_real(bundle, z):
    psi = bundle.psi(np.asarray(z, float))
    with np.errstate(invalid="ignore"):
        return bundle.K * np.sign(psi) * np.abs(psi) ** (1 / bundle.params.r)


def _inverse_increasing(f, y, lo, hi, iters=200):
    """Vectorized bisection for f(x) = y with f increasing on [lo, hi]; nan outside the range."""
    y = np.asarray(y, float)
    flo, fhi = f(np.array([lo]))[0], f(np.array([hi]))[0]
    a, b = np.full(y.shape, lo), np.full(y.shape, hi)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        up = f(mid) < y
        a, b = np.where(up, mid, a), np.where(up, b, mid)
        if np.all(b - a <= 4e-16 * np.maximum(1, np.abs(b))):
            break
    out = 0.5 * (a + b)
    return np.where((y >= flo) & (y <= fhi), out, np.nan)


def lanford_commutativity(bundle, n=257, tol=1e-8):
    """Commutation identities of nu = 2 solutions.

    Checks psi(lam u(-z/lam)) = -lam^r psi(u(z)/lam) on (-lam, 1), the endpoint
    value psi(zeta_1/lam) = -1/lam^r, the fixed point lam zeta_(p-1) of
    z -> lam u_check^p(-z), and eta o xi_hat = xi o eta_hat on (-z1/lam, z1).
    """
    prm = bundle.params
    if prm.nu != 2:
        raise RegimeError("commutativity holds only for nu = 2", stage="lanford")
    lam, r, p, z1 = bundle.lam, prm.r, prm.p, bundle.z1
    rep = BoundsReport(tol)
    z = DomainInterval(-lam, 1.0).interior(n, margin=1e-3)
    u = lambda x: _u_real(bundle, x)
    F1 = bundle.psi(lam * u(-z / lam))
    F2 = -lam ** r * bundle.psi(u(z) / lam)
    d = np.abs(F1 - F2)
    rep.le("lanford_defect", "psi(lam u(-z/lam)) + lam^r psi(u(z)/lam) = 0", float(np.max(d)), tol, absolute=True)
    val = psi_at_xi(bundle)
    rep.le("psi_at_xi", "psi(zeta_1/lam) = -1/lam^r", abs(val * lam ** r + 1), tol, absolute=True)
    xbar = lam * bundle.zeta[p - 1]
    w = -xbar
    for _ in range(p):
        w = float(bundle.u_check(np.array([w]))[0])
    rep.le("xbar_fixed", "lam zeta_(p-1) is fixed by lam u_check^p(-z)", abs(lam * w - xbar), tol, absolute=True)

    # commutation of the extended inverse branches
    lo, hi = -1 / lam, bundle.zeta[1] / lam
    neg_u = lambda x: -u(x)
    xi_hat = lambda y: _inverse_increasing(neg_u, y, lo * (1 - 1e-12), hi * (1 - 1e-12))
    eta_hat = lambda y: -lam * xi_hat(-np.asarray(y) / lam)
    y = DomainInterval(-z1 / lam, z1).interior(65, margin=0.02)
    lhs = eta_hat(xi_hat(y))
    rhs = xi_hat(eta_hat(y))
    ok = np.isfinite(lhs) & np.isfinite(rhs)
    defect = float(np.max(np.abs(lhs[ok] - rhs[ok]))) if ok.any() else np.nan
    rep.le("commutation", "eta o xi_hat = xi o eta_hat", defect, 1e3 * tol, absolute=True)
    rep.skipped = int(np.sum(~ok))
    return rep


def univalence_probe(f, domain=None, samples=2000, tol=1e-9, seed=0):
    """Probe injectivity of f: monotone real trace plus random complex pairs in its ellipse.

    Not a proof.  Fails if two points at distance > tol have images closer
    than tol times the typical image scale.
    """
    dom = domain if domain is not None else f.domain
    x = dom.interior(1025, margin=0.01)
    fx = np.asarray(f(x))
    if not np.all(np.isfinite(fx)):
        return False
    df = np.diff(fx.real)
    if not (np.all(df > 0) or np.all(df < 0)):
        return False
    rng = np.random.default_rng(seed)
    scale = float(np.max(np.abs(fx)) + 1e-300)
    rho = f.complex_rho() if hasattr(f, "complex_rho") else 1.0
    if rho > 1:
        th = rng.uniform(0, 2 * np.pi, (2, samples))
        rr = rng.uniform(1, rho, (2, samples))
        w = rr * np.exp(1j * th)
        t = 0.5 * (w + 1 / w)
        pts = dom.from_t(t)
        fz = np.asarray(f(pts))
        ok = np.all(np.isfinite(fz), axis=0)
        dz = np.abs(pts[0] - pts[1])[ok]
        dw = np.abs(fz[0] - fz[1])[ok]
        if np.any((dz > tol) & (dw < tol * scale)):
            return False
    return True


@dataclass
class AttractorReport:
    c: complex
    fixed_point: float
    fixed_point_defect: float
    derivative_at_fixed_point: float
    derivative_defect: float
    multiplier_modulus: float
    iterations: int
    passed: bool

    def to_dict(self):
        return dict(c_real=self.c.real, c_imag=self.c.imag, fixed_point=self.fixed_point,
                    fixed_point_defect=self.fixed_point_defect,
                    derivative_at_fixed_point=self.derivative_at_fixed_point,
                    derivative_defect=self.derivative_defect,
                    multiplier_modulus=self.multiplier_modulus, iterations=self.iterations,
                    passed=self.passed)


def complex_psi(bundle, z, depth=0, max_depth=40):
    """psi at complex z: chopped series inside its trusted ellipse, else psi(phi(z)) / lam^(r nu)."""
    fn = bundle.psi
    z = complex(z)
    if fn.in_ellipse(z):
        return complex(fn(np.array([z]))[0])
    if depth >= max_depth:
        return complex(np.nan, np.nan)
    prm = bundle.params
    lam = bundle.lam
    w = lam * z
    for _ in range(prm.p):
        w = bundle.K * complex_psi(bundle, -w, depth + 1, max_depth) ** (1 / prm.r)
        if not np.isfinite(w):
            return complex(np.nan, np.nan)
    return complex_psi(bundle, lam ** (prm.nu - 1) * w, depth + 1, max_depth) / lam ** prm.rnu


def _complex_u(bundle, z):
    """u(z) = K psi(z)^(1/r) at complex points (principal branch)."""
    return bundle.K * complex_psi(bundle, z) ** (1 / bundle.params.r)


def attractor_c(bundle, tol=1e-8, max_iter=5000):
    """Attracting fixed point c in the upper half-plane of F^2, F = lam^-nu u o lam^(nu-1) u_check^(p-1).

    Also checks that u(0) = z1 lam^(1-nu) is fixed by F (relative defect) with
    F'(u(0)) = -1/lam (defect of lam F' + 1).
    """
    prm = bundle.params
    lam, nu, p = bundle.lam, prm.nu, prm.p

    def F(z):
        w = complex(z)
        for _ in range(p - 1):
            w = _complex_u(bundle, -w)
        return lam ** -nu * _complex_u(bundle, lam ** (nu - 1) * w)

    # real fixed point in deviation form: F o u_check(lam .) = lam^-nu u o phi and u_check(0) = u(0),
    # with phi(0) = 1 - Q(0) kept as the pair (Q(0), q) so that tiny multipliers do not round away
    x0 = bundle.K
    r = prm.r
    Q = lambda x: float(bundle.phi_map.quot(np.array([x]))[0])
    Q0 = Q(0.0)
    hq = 1e-5
    dQ0 = (Q(hq) - Q(-hq)) / (2 * hq)
    y = 1 - Q0
    qy = float(bundle.psi_view.q(np.array([y]))[0])
    psi_y = Q0 * qy
    fx = lam ** -nu * x0 * psi_y ** (1 / r)
    du_y = (x0 / r) * psi_y ** (1 / r - 1) * float(bundle.psi.deriv(np.array([y]))[0])
    dphi0 = Q0 - dQ0
    ducheck0 = -(x0 / r) * float(bundle.psi.deriv(np.array([0.0]))[0])
    dF = lam ** -nu * du_y * dphi0 / (lam * ducheck0)
    fp_defect = abs(fx / x0 - 1)
    d_defect = abs(dF * lam + 1)

    # start at x0 + i, lowered until the second iterate is evaluable
    height = 1.0
    z = x0 + 1j * height
    while not np.isfinite(F(F(z))) and height > 1e-6:
        height /= 2
        z = x0 + 1j * height
    if not np.isfinite(F(F(z))):
        raise EvaluationError("no admissible start point for the attractor iteration", stage="attractor_c")
    it = 0
    for it in range(1, max_iter + 1):
        zn = F(F(z))
        if not np.isfinite(zn):
            raise EvaluationError("iteration left the evaluable region", stage="attractor_c")
        if abs(zn - z) < 1e-14 * max(1, abs(z)):
            z = zn
            break
        z = zn
    else:
        raise EvaluationError("attractor iteration did not converge", stage="attractor_c")
    c = complex(z)
    eps = 1e-6 * max(1, abs(c))
    d2 = (F(F(c + eps)) - F(F(c - eps))) / (2 * eps)
    mod = float(abs(d2))
    ok = c.imag > 0 and mod < 1 and fp_defect < tol and d_defect < tol
    return AttractorReport(c, float(x0), float(fp_defect), float(dF), float(d_defect), mod, it, bool(ok))
