import numpy as np
import pytest

from renorm.analytic_core import (AnalyticFn, DomainInterval, Homography, PowerFn, compose,
                                  e0_envelope_check, fit, herglotz_certify, lemma_noses_bound,
                                  make_chi, make_h, make_theta, schwarz_multiplier_bound)
from renorm.errors import CompositionError, DomainError


def test_domain_interval_rejects_empty():
    with pytest.raises(DomainError):
        DomainInterval(1.0, 1.0)


def test_make_h_mapping_table():
    h = make_h(0.5, 0.25)
    assert h(0.0) == 0.0
    assert h(1.0) == 1.0
    assert h(-2.0) == pytest.approx(-4.0, abs=1e-15)


def test_make_h_identity_and_inverse():
    h = make_h(0.3, 0.3)
    z = np.linspace(-3, 3, 7)
    assert np.allclose(h(z), z, atol=1e-15)
    g = make_h(0.3, 0.7) @ make_h(0.7, 0.3)
    assert g.is_identity(1e-15)


def test_make_chi_values():
    chi = make_chi(0.5, 3.0)
    assert chi(np.array([1.0]))[0] == 1.0
    assert chi.deriv(np.array([1.0]))[0] == pytest.approx(0.125, rel=1e-13)
    # direct rational evaluation of chi at -2
    b, s = 0.5, 3.0
    B = b ** s * (1 + b)
    direct = ((B - b * b) * -2 + 1 + b + b * b - B) / (-b * b * -2 + 1 + b + b * b)
    assert direct > 0
    assert chi(np.array([-2.0]))[0] == pytest.approx(direct, abs=1e-14)


def test_make_theta():
    th = make_theta(0.04, 0.25)
    assert th(0.0) == 0.0 and th(1.0) == 1.0
    assert th(25.0) == pytest.approx(4.0, abs=1e-13)
    with pytest.raises(DomainError):
        make_theta(0.2, 0.2)


@pytest.mark.parametrize("args,expected", [((1, 1, 1, 1), 1.0), ((3, 3, 1, 1), 1 / 3), ((2, 2, 1, 3), 0.75)])
def test_schwarz_multiplier_bound(args, expected):
    assert schwarz_multiplier_bound(*args) == pytest.approx(expected, abs=1e-15)


def test_schwarz_bound_matches_multiplier_identity():
    lam, nu = 0.5, 1.0
    assert schwarz_multiplier_bound(3, 3, 1, 1) == pytest.approx(lam * (1 - lam ** nu) / (1 - lam ** 2))


def test_fit_reproduces_polynomials():
    f = fit(lambda x: x, DomainInterval(-1, 1), 8)
    assert np.allclose(f.coeffs[:2], [0, 1], atol=1e-15) and f.tail_bound < 1e-15
    g = fit(lambda x: 1 - x, DomainInterval(-2, 3), 8)
    x = np.linspace(-2, 3, 50)
    assert np.allclose(g(x), 1 - x, atol=1e-14)


def test_fit_exp_accuracy():
    f = fit(np.exp, DomainInterval(0, 1), 32)
    x = np.linspace(0, 1, 1000)
    assert np.max(np.abs(f(x) - np.exp(x))) < 1e-13
    assert f.resolved


def test_fit_derivatives_exact_for_series():
    f = fit(np.sin, DomainInterval(-1, 2), 40)
    x = np.linspace(-0.9, 1.9, 30)
    assert np.allclose(f.deriv(x, 1), np.cos(x), atol=1e-12)
    assert np.allclose(f.deriv(x, 3), -np.cos(x), atol=1e-9)


def test_analytic_fn_roundtrip_dict():
    f = make_chi(0.6, 2.5)
    g = AnalyticFn.from_dict(f.to_dict())
    x = f.domain.grid()
    assert np.array_equal(f(x), g(x))


def test_compose_identity_and_involution():
    dom = DomainInterval(-1, 1)
    ident = fit(lambda x: x, DomainInterval(-2, 2), 8)
    f = fit(np.cos, dom, 30)
    assert np.max(np.abs(compose(ident, f)(dom.grid()) - f(dom.grid()))) < 1e-14
    inv = fit(lambda x: 1 - x, DomainInterval(-1, 2), 4)
    g = compose(inv, fit(lambda x: 1 - x, dom, 4))
    assert np.allclose(g(dom.grid()), dom.grid(), atol=1e-14)


def test_compose_homographies_is_identity():
    s, t = 0.4, 0.7
    dom = DomainInterval(-1.0, 1.0)
    hts = make_h(t, s).to_analytic(dom)
    hst = make_h(s, t).to_analytic(DomainInterval(float(make_h(t, s)(-1.0)), float(make_h(t, s)(1.0))))
    g = compose(hst, hts)
    assert np.allclose(g(dom.grid()), dom.grid(), atol=1e-13)


def test_compose_detects_escape():
    f = fit(np.exp, DomainInterval(0, 1), 16)
    g = fit(lambda x: 2 * x, DomainInterval(0, 1), 4)
    with pytest.raises(CompositionError):
        compose(f, g)


def test_herglotz_examples():
    assert herglotz_certify(fit(lambda x: x, DomainInterval(-1, 1), 8)).passed
    assert not herglotz_certify(fit(lambda x: x ** 3, DomainInterval(-1, 1), 8), points=[0.5]).passed
    assert herglotz_certify(make_chi(0.5, 3.0)).passed


def test_herglotz_anti_and_power():
    psi = fit(lambda x: (1 - x) / (1 + 0.3 * x), DomainInterval(-2, 2), 40)
    assert herglotz_certify(psi, anti=True).passed
    assert not herglotz_certify(psi).passed
    u = PowerFn(psi, 2.0, 1.0, DomainInterval(-2, 0.95))
    assert herglotz_certify(u, anti=True).passed


def test_envelope_affine_equality():
    psi = fit(lambda x: 1 - x, DomainInterval(-1, 2), 4)
    rep = e0_envelope_check(psi, 0.0, 0.0)
    assert rep.passed
    assert abs(rep.worst_sandwich) < 1e-14


def test_envelope_lower_attained():
    um, up = 0.4, 0.3
    psi = fit(lambda x: (1 - x) / (1 + um * x), DomainInterval(-2, 3), 60)
    rep = e0_envelope_check(psi, um, up)
    assert rep.passed
    assert abs(rep.worst_sandwich) < 1e-12


def test_envelope_rejects_bad_normalization():
    with pytest.raises(DomainError):
        e0_envelope_check(fit(lambda x: 2 - x, DomainInterval(-1, 2), 4), 0.1, 0.1)


def test_interval_bound_affine_limit():
    f = fit(lambda x: 3 * x + 1, DomainInterval(-5, 5), 4)
    assert lemma_noses_bound(f, -4, -1, 2, np.inf, 0.5) == pytest.approx(f(np.array([0.5]))[0])


def test_interval_bound_pole_at_B_is_exact():
    f = lambda x: -1 / (x - 2)
    bound = lemma_noses_bound(f, -10, 0, 1, 2, 0.5)
    # a Herglotz homography with its pole at B attains the bound
    assert bound == pytest.approx(f(0.5), abs=1e-15)


def test_interval_bound_strict_for_pole_beyond_B():
    f = lambda x: -1 / (x - 3)
    bound = lemma_noses_bound(f, -10, 0, 1, 2, 0.5)
    assert f(0.5) - bound > 1e-3


def test_homography_algebra():
    h = Homography(2.0, 1.0, 0.5, 3.0)
    z = np.linspace(-1, 1, 9)
    assert np.allclose(h.inverse()(h(z)), z, atol=1e-15)
    assert np.allclose(h.deriv(z), (2 * 3 - 0.5) / (0.5 * z + 3) ** 2)
    assert np.allclose(h.dd(z, z + 0.1), (h(z) - h(z + 0.1)) / -0.1)
