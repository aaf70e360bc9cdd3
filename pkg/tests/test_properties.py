import functools
from fractions import Fraction

import numpy as np
from hypothesis import given, settings, strategies as st

import oracles as O
from conftest import POINTS, _solved
from renorm.analytic_core import (DomainInterval, Homography, chi_homography, fit, herglotz_certify, make_chi,
                                  make_h)
from renorm.asymptotics import JetFn, increasing_inverse
from renorm.renorm_ops import FrameState, apply_B, koenigs_linearizer, powdiff_quot
from renorm.verifier import appendix_inequality

unit = st.fractions(min_value=Fraction(1, 1000), max_value=Fraction(999, 1000))


@given(unit, unit, unit)
def test_make_h_composes_exactly(s, t, u):
    g = make_h(t, u) @ make_h(s, t)
    assert g.equals(make_h(s, u))
    assert (make_h(t, s) @ make_h(s, t)).is_identity()


@given(unit, unit)
def test_make_h_fixes_zero_and_one(s, t):
    h = make_h(s, t)
    assert h(Fraction(0)) == 0 and h(Fraction(1)) == 1
    assert h(-1 / s) == -1 / t


coef = st.floats(min_value=-5, max_value=5).filter(lambda v: abs(v) > 1e-2)


@given(coef, coef, coef, coef, st.floats(min_value=-1, max_value=1))
def test_homography_inverse_roundtrip(a, b, c, d, z):
    det = a * d - b * c
    if abs(det) < 1e-2 or abs(c * z + d) < 1e-2:
        return
    h = Homography(a, b, c, d)
    w = h(z)
    if abs(-c * w + a) < 1e-2 or abs(w) > 1e3:
        return
    assert abs(h.inverse()(w) - z) < 1e-9 * (1 + abs(z))


@given(st.floats(min_value=1e-6, max_value=1 - 1e-6))
def test_log_inequality_positive(x):
    assert appendix_inequality(x) > 0


@given(st.floats(min_value=1e-4, max_value=1e4), st.floats(min_value=1e-3, max_value=1e3),
       st.floats(min_value=1e-3, max_value=1.0))
def test_inverse_inequality(ap, m, t):
    y = t * m
    # largest z with z (1 + a' z^2) <= y
    z = y
    for _ in range(200):
        z -= (ap * z ** 3 + z - y) / (3 * ap * z * z + 1)
    a = ap / (1 + 3 * ap * m * m)
    assert z <= y * (1 - a * y * y) * (1 + 1e-12) + 1e-300


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=0.3, max_value=0.85), st.floats(min_value=1.5, max_value=6.0))
def test_chi_linearizer_is_mobius(b, s):
    chi = make_chi(b, s)
    assert herglotz_certify(chi).passed
    psi = koenigs_linearizer(FrameState(b, chi, 0.0), b ** s)
    H = chi_homography(b, s)
    ref, _ = O.mobius_linearizer(H.a, H.b, H.c, H.d)
    x = psi.domain.grid()
    assert np.max(np.abs(psi(x) - ref(x))) < 1e-11
    rep = herglotz_certify(psi, anti=True)
    assert rep.min_deriv >= 0 and rep.min_logderiv >= 0
    # a Moebius map has an exactly singular Pick matrix, so its smallest
    # eigenvalue sits at the noise level of the third derivative
    assert rep.min_eig > -1e-6


@functools.lru_cache(maxsize=None)
def _intermediates(name):
    bundle = _solved(*POINTS[name])[0]
    _, step = apply_B(bundle.b_frame_map(), bundle.params)
    return step.phi0, step.psi.fn, bundle.phi, bundle.psi, bundle.u


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["feigenbaum", "tripling", "low_nu_p1", "p1_high_nu", "pge2_high_nu"]),
       st.lists(st.floats(min_value=0.05, max_value=0.95), min_size=1, max_size=8))
def test_fixed_point_intermediates_are_herglotz(name, fracs):
    phi0, psi_step, phi, psi, u = _intermediates(name)
    for f, anti in ((phi0, False), (phi, False), (psi_step, True), (psi, True), (u, True)):
        pts = f.domain.lo + np.array(fracs) * f.domain.width
        assert herglotz_certify(f, anti=anti, points=pts).passed


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(min_value=-1, max_value=1), min_size=3, max_size=8),
       st.floats(min_value=-1, max_value=1), st.floats(min_value=-1, max_value=1))
def test_dd_symmetric_and_consistent(c, x, y):
    f = fit(lambda t: np.polynomial.polynomial.polyval(t, c), DomainInterval(-1, 1), 12)
    X, Y = np.array([x]), np.array([y])
    assert np.allclose(f.dd(X, Y), f.dd(Y, X), atol=1e-12)
    if abs(x - y) > 1e-3:
        assert np.allclose(f.dd(X, Y), (f(X) - f(Y)) / (x - y), atol=1e-9)
    assert np.allclose(f.dd(X, X), f.deriv(X), atol=1e-11)


@given(st.floats(min_value=1e-3, max_value=10), st.floats(min_value=1e-3, max_value=10),
       st.floats(min_value=0.05, max_value=2))
def test_powdiff_quot(a, b, alpha):
    got = float(powdiff_quot(a, b, alpha)[()])
    if abs(a - b) > 1e-4 * b:
        assert np.isclose(got, (a ** alpha - b ** alpha) / (a - b), rtol=1e-8)
    else:
        assert np.isclose(got, alpha * b ** (alpha - 1), rtol=1e-3)


@given(st.floats(min_value=0.0, max_value=1.0))
def test_increasing_inverse(y):
    F = JetFn(lambda x: x ** 3 + x, lambda x: np.array([x ** 3 + x, 3 * x * x + 1, 6 * x, 6 + 0 * x]))
    x = increasing_inverse(F, np.array([2 * y]), 0.0, 1.0)[0]
    assert abs(x ** 3 + x - 2 * y) < 1e-12
