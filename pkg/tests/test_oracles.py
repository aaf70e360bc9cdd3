"""Reference values frozen from the independent oracles, and the oracles' own sanity."""
import math

import numpy as np
import pytest

import oracles as O

# frozen oracle outputs (mpmath, 14-term even series, 40 digits)
FEIGENBAUM_INV_LAMBDA = 2.502907875095893
TRIPLING_INV_LAMBDA = 9.277341115568236
Z1_BRUTE = 0.7484785          # psi = 1 - z, r = 2, nu = 1, p = 2, lam = 0.1; grid step 1e-6
LOG_INEQUALITY_AT_HALF = 0.08240814508795859


@pytest.mark.parametrize("p,expected", [(1, FEIGENBAUM_INV_LAMBDA), (2, TRIPLING_INV_LAMBDA)])
def test_tupling_oracle_stable_in_truncation(p, expected):
    lam14, _ = O.tupling_lambda(p, n_terms=14)
    lam18, _ = O.tupling_lambda(p, n_terms=18)
    assert abs(1 / lam14 - expected) < 1e-12
    assert abs(1 / lam18 - 1 / lam14) < 1e-12


def test_tupling_oracle_known_feigenbaum_digits():
    # alpha = 2.502907875095892822283902873218... (published value)
    assert abs(FEIGENBAUM_INV_LAMBDA - 2.5029078750958928) < 1e-14


@pytest.mark.parametrize("p,closed", [(1, (math.sqrt(5) - 1) / 2), (2, math.sqrt(2) - 1)])
def test_affine_oracle_matches_closed_form(p, closed):
    assert abs(O.affine_lambda(p, 2.0) - closed) < 1e-15


def test_mobius_linearizer_conjugates():
    a, b, c, d = 0.3, 0.2, -0.4, 0.9     # fixes 1 since a + b = c + d
    psi, zs = O.mobius_linearizer(a, b, c, d)
    phi = lambda z: (a * z + b) / (c * z + d)
    m = (a * d - b * c) / (c + d) ** 2
    z = np.linspace(-0.5, 0.9, 11)
    assert np.allclose(psi(phi(z)), m * psi(z), atol=1e-14)
    assert psi(0.0) == 1.0 and psi(1.0) == 0.0


def test_brute_z1_frozen():
    roots, h = O.brute_z1(lambda z: 1 - z, 2.0, 0.1, 2, 1.0)
    assert len(roots) == 1 and abs(roots[0] - Z1_BRUTE) <= h


def test_log_inequality_oracle_frozen():
    assert abs(O.log_inequality_value(0.5) - LOG_INEQUALITY_AT_HALF) < 1e-16
