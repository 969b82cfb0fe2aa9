import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vdmap.errors import NonPositiveDepth
from vdmap.ndt import Ellipsoid
from vdmap.noise import NoiseModel, axial_sigma, elongated_mask, is_elongated

MODEL = NoiseModel()


def ellipsoid_with(lam_max):
    return Ellipsoid(np.zeros(3), np.diag([lam_max, 1e-8, 1e-8]), np.zeros(3), 10)


def test_axial_sigma_examples():
    assert axial_sigma(MODEL, 0.4) == pytest.approx(0.0012, abs=1e-15)
    assert axial_sigma(MODEL, 2.0) == pytest.approx(0.006064, abs=1e-12)
    for z in (0.0, -1.0):
        with pytest.raises(NonPositiveDepth):
            axial_sigma(MODEL, z)


def test_axial_sigma_non_decreasing_over_range():
    z = np.linspace(0.3, 10, 5000)
    assert np.all(np.diff(axial_sigma(MODEL, z)) >= 0)


def test_is_elongated_examples():
    assert not is_elongated(MODEL, Ellipsoid(np.zeros(3), 1e-8 * np.eye(3), np.zeros(3), 5), 1.0)
    assert is_elongated(MODEL, ellipsoid_with(1.0), 0.5)


def test_boundary_is_not_elongated():
    z = 1.7
    lam = (3.0 * axial_sigma(MODEL, z)) ** 2
    assert not elongated_mask(MODEL, np.array([lam]), np.array([z]), 3.0)[0]
    assert elongated_mask(MODEL, np.array([np.nextafter(lam, 1)]), np.array([z]), 3.0)[0]


@given(st.floats(1e-10, 1.0), st.floats(1e-10, 1.0), st.floats(0.3, 10), st.floats(0.5, 10),
       st.floats(0.5, 10))
def test_elongation_monotone(lam_a, lam_b, z, k_a, k_b):
    lo, hi = sorted((lam_a, lam_b))
    if is_elongated(MODEL, ellipsoid_with(lo), z, 3.0):
        assert is_elongated(MODEL, ellipsoid_with(hi), z, 3.0)
    k_lo, k_hi = sorted((k_a, k_b))
    if not is_elongated(MODEL, ellipsoid_with(lo), z, k_lo):
        assert not is_elongated(MODEL, ellipsoid_with(lo), z, k_hi)
