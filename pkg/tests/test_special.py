import math

import mpmath
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from egap.special import erf, erfc, normal_cdf, normal_sf


def test_erf_matches_math_on_a_dense_grid():
    x = np.linspace(-8, 8, 20001)
    ref = np.array([math.erf(v) for v in x])
    assert np.max(np.abs(erf(x) - ref)) < 2e-15


def test_erfc_tail_is_relatively_accurate():
    x = np.array([3.0, 4.5, 6.0, 9.0, 15.0, 26.0])
    mp = np.array([float(mpmath.erfc(mpmath.mpf(v))) for v in x])
    assert np.all(np.abs(erfc(x) / mp - 1) < 1e-12)


@settings(max_examples=300, deadline=None)
@given(st.floats(-40, 40, allow_nan=False))
def test_erf_against_mpmath(v):
    assert abs(float(erf(np.array([v]))[0]) - float(mpmath.erf(v))) < 2e-15


def test_normal_cdf_symmetry_and_center():
    z = np.linspace(-10, 10, 401)
    np.testing.assert_allclose(normal_cdf(z) + normal_cdf(-z), 1.0, atol=1e-15)
    np.testing.assert_allclose(normal_sf(z), normal_cdf(-z), atol=1e-16)
    assert normal_cdf(np.array([0.0]))[0] == 0.5
    center = normal_cdf(np.array([0.5]))[0] - normal_cdf(np.array([-0.5]))[0]
    assert abs(center - 0.3829249225480262) < 1e-15
