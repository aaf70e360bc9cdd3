import numpy as np
import pytest

import oracles as O
from conftest import POINTS
from test_oracles import LOG_INEQUALITY_AT_HALF
from renorm.analytic_core import DomainInterval, fit
from renorm.errors import DomainError, RegimeError
from renorm.verifier import (appendix_inequality, appendix_sweep, attractor_c, check_bounds, feasibility,
                             lanford_commutativity, psi_at_xi, univalence_probe, xi_max)


@pytest.mark.parametrize("pt,ok", [((1, 2, 1), True), ((3, 4, 0.5), False), ((3, 4.5, 0.5), True),
                                   ((2, 1, 2), False), ((2, 1.01, 2), True), ((1, 1.2, 0.8), False)])
def test_feasibility(pt, ok):
    passed, margin = feasibility(*pt)
    assert passed is ok
    if pt[2] <= 1:
        assert (margin > 0) is ok


def test_log_inequality_values():
    assert appendix_inequality(0.5) == pytest.approx(LOG_INEQUALITY_AT_HALF, abs=1e-15)
    x = np.array([1e-3, 0.1, 0.9, 0.999])
    assert np.allclose(appendix_inequality(x), [O.log_inequality_value(t) for t in x], rtol=1e-10, atol=1e-15)
    for bad in (0.0, 1.0, -0.2):
        with pytest.raises(DomainError):
            appendix_inequality(bad)


def test_log_inequality_sweep():
    ok, m, x = appendix_sweep(10_000)
    assert ok and m > 0 and len(x) == 10_000


@pytest.mark.parametrize("name", list(POINTS))
def test_check_bounds_on_solutions(get_bundle, name):
    rep = check_bounds(get_bundle(name))
    assert rep.passed, rep.failures()
    assert len(rep) > 0


@pytest.mark.parametrize("p", [1, 2])
def test_check_bounds_on_affine(get_bundle, p):
    assert check_bounds(get_bundle((p, 1.0, 2.0), test_mode=True)).passed


def test_check_bounds_detects_wrong_lambda(get_bundle):
    bundle = get_bundle("feigenbaum")
    d = bundle.to_dict()
    d["lambda"] *= 2
    from renorm.fixpoint import SolutionBundle
    assert not check_bounds(SolutionBundle.from_dict(d)).passed


@pytest.mark.parametrize("name", ["feigenbaum", "tripling", "low_nu_p3", "p1_high_nu"])
def test_xi_max_is_lambda_minus_two(get_bundle, name):
    bundle = get_bundle(name)
    x, _ = xi_max(bundle)
    assert x == pytest.approx(bundle.lam ** -2, rel=1e-14)


def test_xi_max_p1_high_nu_equals_zeta1_over_lambda(get_bundle):
    bundle = get_bundle("p1_high_nu")
    assert bundle.zeta[1] / bundle.lam == pytest.approx(bundle.lam ** -2, rel=1e-12)


def test_xi_chain_increasing(get_bundle):
    bundle = get_bundle("pge2_high_nu")
    x, chain = xi_max(bundle)
    assert np.all(np.diff(chain) > 0)
    assert x == chain[0]
    assert x == pytest.approx(bundle.zeta[1] / bundle.lam, rel=1e-12)


def test_commutativity_needs_nu_two(get_bundle):
    with pytest.raises(RegimeError):
        lanford_commutativity(get_bundle("feigenbaum"))


@pytest.mark.parametrize("p", [1, 2])
def test_commutativity_affine(get_bundle, p):
    rep = lanford_commutativity(get_bundle((p, 1.0, 2.0), test_mode=True), tol=1e-10)
    assert rep.passed, rep.failures()


@pytest.mark.parametrize("name,tol", [("p1_high_nu", 1e-9), ("pge2_high_nu", 1e-8)])
def test_commutativity_solutions(get_bundle, name, tol):
    bundle = get_bundle(name)
    rep = lanford_commutativity(bundle, tol=tol)
    assert rep.passed, rep.failures()
    assert psi_at_xi(bundle) * bundle.lam ** bundle.params.r == pytest.approx(-1, abs=tol)


def test_univalence_probe():
    dom = DomainInterval(-1, 2)
    assert univalence_probe(fit(lambda x: 1 - x, dom, 4))
    assert not univalence_probe(fit(lambda x: (1 - x) ** 2, dom, 4))


@pytest.mark.parametrize("name", list(POINTS))
def test_univalence_of_psi(get_bundle, name):
    assert univalence_probe(get_bundle(name).psi)


@pytest.mark.parametrize("name", list(POINTS))
def test_attractor(get_bundle, name):
    rep = attractor_c(get_bundle(name))
    assert rep.passed
    assert rep.c.imag > 0 and rep.multiplier_modulus < 1
    assert rep.fixed_point_defect < 1e-8 and rep.derivative_defect < 1e-6
