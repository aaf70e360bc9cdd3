import functools

import numpy as np
import pytest

from conftest import _solved
from renorm.asymptotics import (build, check_bounds, consistency_defect, family_differences, invariants,
                                limit_residual, inverse_inequality_scan)
from renorm.errors import RegimeError
from renorm.fixpoint import residual


@functools.lru_cache(maxsize=None)
def asym(p, r, nu):
    return build(_solved(p, r, nu)[0])


def test_build_rejects_other_regimes(get_bundle):
    with pytest.raises(RegimeError):
        build(get_bundle("pge2_high_nu"))
    with pytest.raises(RegimeError):
        build(get_bundle("feigenbaum"))


def test_normalizations():
    ab = asym(2, 10.0, 1.0)
    one = np.array([1.0])
    lam, r = ab.lam, ab.params.r
    assert ab.V(one)[0] == pytest.approx(1, abs=1e-9)
    assert ab.V.deriv(one, 1)[0] * lam == pytest.approx(-1, abs=1e-7)
    assert ab.f.deriv(one)[0] * lam / r == pytest.approx(-1, abs=1e-7)
    assert abs(ab.H_plus(0.0)) < 1e-14
    assert abs(ab.S_plus(np.array([1.0]))[0]) < 1e-14
    assert ab.alpha == pytest.approx(float(ab.bundle.psi(np.array([-lam]))[0]), rel=1e-12)


def test_orbit_consistency():
    ab = asym(2, 10.0, 1.0)
    assert consistency_defect(ab) < 1e-8
    assert ab.consistency < 1e-6


@pytest.mark.parametrize("pt", [(2, 10.0, 1.0), (2, 2.0, 1.0), (2, 10.0, 0.8), (2, 6.0, 0.5), (3, 12.0, 1.0)])
def test_bounds_and_invariants(pt):
    ab = asym(*pt)
    rep = check_bounds(ab)
    assert rep.passed, rep.failures()
    inv = invariants(ab)
    assert inv.passed, inv.failures()


def test_limit_residual_tracks_fixed_point_residual():
    ab = asym(2, 10.0, 1.0)
    assert limit_residual(ab) <= 10 * residual(ab.bundle)


def test_family_differences_shape():
    out = family_differences([asym(2, 10.0, 1.0), asym(2, 20.0, 1.0)])
    assert len(out) == 1 and out[0]["r_pair"] == (10.0, 20.0)
    assert 0 < out[0]["plus"] < 1 and 0 < out[0]["minus"] < 1


def test_inverse_inequality_scan():
    ok, margin, count = inverse_inequality_scan(n_side=40)
    assert ok and count == 40 ** 3
    assert margin > -1e-12


def test_tiny_lambda_is_reported_not_hidden(get_bundle):
    # lambda ~ 6e-5 stretches the psi window past what a single fit resolves
    from renorm.errors import EvaluationError
    with pytest.raises(EvaluationError):
        build(get_bundle("low_nu_p3"))
