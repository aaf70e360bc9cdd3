"""Fixed-point iteration of the renormalization operator and the solution bundle.

Iterates are carried in the frame of their own scaling parameter: step k
produces phi_k in frame lambda_k, and the next step conjugates it to frame
lambda_{k+1}.  Because h_{b,t} o h_{s,b} = h_{s,t} this is the same sequence as
iterating B in the fixed b frame, without the round trips through b.
"""
from dataclasses import dataclass, field

import numpy as np

from .analytic_core import DEFAULT_DEGREE, AnalyticFn, DomainInterval, PowerFn, fit_core, make_chi
from .errors import DivergenceError, EvaluationError, NonConvergenceError, RegimeError
from .renorm_ops import (PGE2_HIGH_NU, BlendMap, ConjMap, FnMap, Psi, StructMap,
                         analyticity_endpoint, make_params, powdiff_quot, renormalize, seed_map,
                         to_b_frame)

TEST_MODE_DEGREE = 24


@dataclass
class IterationTrace:
    lam: list = field(default_factory=list)
    change: list = field(default_factory=list)
    damping: list = field(default_factory=list)
    truncated: list = field(default_factory=list)

    def append(self, lam, change, theta, truncated=False):
        self.lam.append(float(lam))
        self.change.append(float(change))
        self.damping.append(float(theta))
        self.truncated.append(bool(truncated))

    def __len__(self):
        return len(self.lam)

    def to_dict(self):
        ch = [c if np.isfinite(c) else None for c in self.change]
        return dict(lam=self.lam, change=ch, damping=self.damping, truncated=self.truncated)


@dataclass
class SolutionBundle:
    params: object
    lam: float
    z1: float
    zeta: np.ndarray
    psi: AnalyticFn
    window: DomainInterval
    iterations: int = 0
    residual: float = np.nan
    xi_max: float = np.nan
    xi_chain: np.ndarray = None
    b_fixed_point: bool = True
    trace: IterationTrace = None

    def __post_init__(self):
        prm = self.params
        self.zeta = np.asarray(self.zeta, float)
        core = self.psi.with_extension(None)
        self.psi_view = Psi(core, None, self.lam ** prm.rnu)
        self.phi_map = StructMap(self.psi_view, self.lam, self.z1, self.zeta, prm)
        self.psi_view.ext = self.phi_map
        self.psi = core.with_extension(lambda x: self.psi_view(x))
        self.K = self.z1 * self.lam ** (1 - prm.nu)
        self.u = PowerFn(self.psi, prm.r, self.K, DomainInterval(self.window.lo, 1.0))
        L = -self.window.lo
        LK = min(L + 0.5 * (1 / self.lam - L), 3 * L + 1)
        m = self.phi_map.d1
        self.phi = fit_core(lambda z: self.phi_map.quot(z) / m, DomainInterval(-LK, self.window.hi),
                            self.psi.degree, offset=1.0, scale=m, anchor=1.0)

    @property
    def tau(self):
        return self.lam ** self.params.r

    @property
    def y0(self):
        return self.z1 ** self.params.r

    @property
    def multiplier(self):
        return self.phi_map.d1

    def u_check(self, w):
        """u(-w) = z1 lam^{1-nu} v(w)."""
        return self.phi_map.u_check(np.asarray(w, float))

    def b_frame_map(self, degree=None):
        """The fixed point Phi* = h_{lam,b} o phi o h_{b,lam} as an AnalyticFn in the b frame."""
        from .renorm_ops import StepResult
        st = StepResult(self.lam, self.multiplier, self.psi_view, self.z1, self.zeta, self.phi_map,
                        None, self.window, 0.0)
        return to_b_frame(st, self.params, degree or self.psi.degree)

    def to_dict(self):
        prm = self.params
        return dict(p=prm.p, r=prm.r, nu=prm.nu, b=prm.b, regime=prm.regime, lambda1=prm.lambda1,
                    test_mode=prm.test_mode, **{"lambda": self.lam}, z1=self.z1, tau=self.tau,
                    y0=self.y0, xi_max=self.xi_max, residual=self.residual, iterations=self.iterations,
                    multiplier=self.multiplier, b_fixed_point=self.b_fixed_point,
                    zeta=[float(z) if np.isfinite(z) else None for z in self.zeta],
                    window=[self.window.lo, self.window.hi],
                    psi=self.psi.to_dict(), phi=self.phi.to_dict(),
                    u=dict(kind="power", K=self.K, r=prm.r, base="psi"))

    @classmethod
    def from_dict(cls, d):
        prm = make_params(d["p"], d["r"], d["nu"], lambda1=d.get("lambda1"),
                          use_N=d.get("lambda1") is not None, test_mode=d.get("test_mode", False))
        zeta = np.array([np.nan if z is None else z for z in d["zeta"]], float)
        b = cls(prm, float(d["lambda"]), float(d["z1"]), zeta, AnalyticFn.from_dict(d["psi"]),
                DomainInterval(*d["window"]), int(d.get("iterations", 0)))
        b.residual = residual(b)
        b.xi_max, b.xi_chain = analyticity_endpoint(b.phi_map, prm)
        b.b_fixed_point = bool(d.get("b_fixed_point", True))
        return b


def seed(params, degree=DEFAULT_DEGREE):
    """chi_{b, r nu} as an AnalyticFn on [-1/b, 1/b^2]."""
    return make_chi(params.b, params.rnu, degree)


def _change(prev, cur):
    """Relative lambda change plus sup-grid change of psi on the shared window."""
    dl = abs(cur.lam - prev.lam) / cur.lam
    lo = max(prev.window.lo, cur.window.lo)
    hi = min(prev.window.hi, cur.window.hi)
    g = DomainInterval(lo, hi).grid()
    dq = np.max(np.abs(cur.psi(g) - prev.psi(g)))
    return max(dl, float(dq))


def _oscillating(lams, tol):
    if len(lams) < 5:
        return False
    d = np.diff(lams[-5:])
    alt = np.all(d[1:] * d[:-1] < 0)
    slow = abs(d[-1]) > 0.7 * abs(d[-3])
    return bool(alt and slow and abs(d[-1]) > 1e3 * tol * abs(lams[-1]))


def _refit_frame_map(F, lam, window, degree):
    """Collapse a composite frame map into a fitted one on a wide interval."""
    L = -window.lo
    LK = min(L + 0.5 * (1 / lam - L), 3 * L + 1)
    # a blend is only known where both parents are; trim the left end to that
    x = np.linspace(-LK, -L, 401)
    bad = np.nonzero(~np.isfinite(F.quot(x)))[0]
    if len(bad):
        LK = -x[min(bad[-1] + 2, len(x) - 1)]
    dom = DomainInterval(-LK, window.hi)
    m = F.d1
    fn = fit_core(lambda z: F.quot(z) / m, dom, degree, offset=1.0, scale=m, anchor=1.0)
    return FnMap(fn, lam, F.hint)


def iterate(params, max_iter=500, tol=1e-12, damping=1.0, use_N=None, degree=None,
            plateau=30, callback=None):
    """Iterate the renormalization operator from the seed chi_{b, r nu}.

    Parameters
    ----------
    params : RegimeParams
    max_iter, tol : int, float
        Stop once the change (relative lambda change or sup-grid psi change)
        drops below tol.  If the change stalls for `plateau` iterations at a
        level below 1e3 tol, the iterate is accepted provided its functional
        equation residual is below 10 tol.
    damping : float
        Initial convex damping theta in (0, 1]; halved when lambda oscillates.
    use_N : bool or None
        Use the truncated operator; None picks it for p >= 2, nu > 1, r nu <= p.

    Returns
    -------
    SolutionBundle, IterationTrace
    """
    if use_N is None:
        use_N = params.regime == PGE2_HIGH_NU and params.rnu <= params.p and not params.test_mode
    if use_N and params.lambda1 is None:
        params = make_params(params.p, params.r, params.nu, use_N=True, test_mode=params.test_mode)
    lambda1 = params.lambda1 if use_N else None
    if degree is None:
        degree = TEST_MODE_DEGREE if params.test_mode else DEFAULT_DEGREE
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    theta = damping
    trace = IterationTrace()
    F = seed_map(params)
    prev = None
    best, best_it = np.inf, 0
    for it in range(1, max_iter + 1):
        try:
            st = renormalize(F, params, degree, lambda1=lambda1)
        except RegimeError as e:
            raise DivergenceError(f"iterate left the admissible lambda range: {e}", stage="iterate",
                                  payload={"trace": trace.to_dict()}) from e
        if not 0 < st.lam <= params.b:
            raise DivergenceError(f"lambda = {st.lam} outside (0, b]", stage="iterate",
                                  payload={"trace": trace.to_dict()})
        change = _change(prev, st) if prev is not None else np.inf
        trace.append(st.lam, change, theta, st.truncated)
        if callback is not None:
            callback(it, st, change)
        if change < best * 0.98:
            best, best_it = change, it
        done = change < tol
        stalled = it - best_it >= plateau and best < 1e3 * tol
        if done or stalled:
            bundle = _assemble(params, st, it, trace)
            if done or bundle.residual < 10 * tol:
                if use_N:
                    bundle.b_fixed_point = not any(trace.truncated[-5:])
                return bundle, trace
            if stalled:
                break
        if _oscillating(trace.lam, tol) and theta > 1 / 64:
            theta /= 2
        nxt = st.phi
        if theta < 1 and prev is not None:
            nxt = _refit_frame_map(BlendMap(ConjMap(F, st.lam), st.phi, theta), st.lam, st.window, degree)
        prev, F = st, nxt
    raise NonConvergenceError(f"no convergence after {len(trace)} iterations (best change {best:.2e})",
                              stage="iterate", payload={"trace": trace.to_dict()})


def _assemble(params, st, iterations, trace=None):
    b = SolutionBundle(params, st.lam, st.z1, st.zeta, st.psi.fn, st.window, iterations, trace=trace)
    b.residual = residual(b)
    try:
        b.xi_max, b.xi_chain = analyticity_endpoint(b.phi_map, params)
    except EvaluationError:
        b.xi_max, b.xi_chain = np.nan, None
    return b


def solve(p, r, nu, **kw):
    """Convenience wrapper: build params and iterate."""
    test_mode = kw.pop("test_mode", False)
    lambda1 = kw.pop("lambda1", None)
    use_N = kw.get("use_N")
    params = make_params(p, r, nu, lambda1=lambda1, use_N=bool(use_N), test_mode=test_mode)
    return iterate(params, **kw)


def residual_profile(bundle, grid=None):
    """Pointwise defects of psi = lam^{-r nu} psi o phi and u = lam^{-nu} u o phi."""
    prm = bundle.params
    g = bundle.window.grid() if grid is None else np.asarray(grid, float)
    psi = bundle.psi_view
    Q = bundle.phi_map.quot(g)
    if not np.all(np.isfinite(Q)):
        bad = g[~np.isfinite(Q)]
        raise EvaluationError(f"grid escapes the composition domain on [{bad.min():.6g}, {bad.max():.6g}]",
                              stage="residual")
    mult = bundle.lam ** prm.rnu
    y = 1 + (g - 1) * Q
    qy = psi.q(y)
    dpsi = np.abs(1 - g) * np.abs(psi.q(g) - Q / mult * qy)
    a = psi(g)
    bb = (1 - g) * Q / mult * qy
    left = g < 1
    du = np.zeros_like(g)
    du[left] = bundle.K * powdiff_quot(a[left], bb[left], 1 / prm.r) * dpsi[left]
    return g, dpsi, du


def residual(bundle):
    """Sup-grid defect of the psi equation and of the u equation (the larger one)."""
    _, dpsi, du = residual_profile(bundle)
    return float(max(np.max(dpsi), np.max(du)))
