from fractions import Fraction
import math

from hypothesis import given, strategies as st
import numpy as np
import pytest

from kolmoflow.domain import (
    GeometryParams,
    ModeIndex,
    PhysicalParams,
    beta,
    beta_grid,
    check_admissible,
    eigen_beta,
    eigen_to_lattice,
    lattice_to_eigen,
    require_admissible,
)
from kolmoflow.errors import ValidationError


def test_beta_examples(geom):
    assert beta(geom, 1, 1) == pytest.approx(0.505625, abs=1e-15)
    assert beta(geom, 1, 7) == pytest.approx(1.255625, abs=1e-15)
    assert beta(geom, 0, 8) == 1.0


def test_beta_rejects_bad_c(geom):
    for c in (0, -3, 1.5):
        with pytest.raises(ValidationError):
            beta(geom, 0, c)


def test_alpha_is_exact():
    g = GeometryParams(0.5, 6, 3)
    assert g.alpha == Fraction(1, 4)
    assert isinstance(g.alpha, Fraction)


@pytest.mark.parametrize(
    "kw",
    [dict(kx=0.0, n_walls=4, j_mode=1), dict(kx=0.7, n_walls=1, j_mode=1), dict(kx=0.7, n_walls=4, j_mode=4),
     dict(kx=0.7, n_walls=4, j_mode=0), dict(kx=float("nan"), n_walls=4, j_mode=1)],
)
def test_geometry_validation(kw):
    with pytest.raises(ValidationError):
        GeometryParams(**kw)


def test_physical_validation():
    with pytest.raises(ValidationError):
        PhysicalParams(-1.0, 10.0)
    with pytest.raises(ValidationError):
        PhysicalParams(1.0, 0.0)
    assert PhysicalParams(0.0, math.inf).reynolds == math.inf
    assert PhysicalParams(20, 100).with_reynolds(5).reynolds == 5.0


def test_admissibility_examples():
    assert check_admissible(GeometryParams(0.7, 4, 1))
    assert not check_admissible(GeometryParams(1.2, 4, 1))
    assert check_admissible(GeometryParams(0.63, 4, 1))
    assert "admissible" in check_admissible(GeometryParams(0.7, 4, 1)).describe()
    with pytest.raises(ValidationError):
        require_admissible(GeometryParams(1.2, 4, 1))


def test_eigen_to_lattice_examples(geom):
    assert eigen_to_lattice(0, geom) == (ModeIndex(1, 1), 1, 0)
    assert eigen_to_lattice(-1, geom) == (ModeIndex(1, 7), -1, 3)
    assert eigen_to_lattice(2, geom) == (ModeIndex(1, 17), 1, 2)


geoms = st.builds(
    lambda kx, n, jf: GeometryParams(kx, n, 1 + int(jf * (n - 1)) if n > 1 else 1),
    st.floats(0.05, 1.5),
    st.integers(2, 40),
    st.floats(0, 0.999),
)


@given(geoms, st.integers(-500, 500))
def test_eigen_lattice_round_trip(g, n):
    mode, sign, q = eigen_to_lattice(n, g)
    assert mode.c >= 1
    assert lattice_to_eigen(mode.c, g) == n
    assert q == n % 4
    assert eigen_beta(g, n) == pytest.approx(beta(g, 1, mode.c), rel=1e-14)


@given(geoms)
def test_admissible_window(g):
    adm = check_admissible(g)
    b0 = g.kx**2 + (g.j_mode / g.denom) ** 2
    bm1 = g.kx**2 + (1 - g.j_mode / g.denom) ** 2
    assert bool(adm) == (b0 < 1 < bm1)
    if adm:
        assert beta(g, 1, g.j_mode) < 1 < beta(g, 1, g.denom - g.j_mode)


@given(geoms, st.integers(0, 6), st.integers(1, 64))
def test_beta_grid_matches_beta_and_is_even_in_m(g, mx, C):
    B = beta_grid(g, mx, C)
    assert B.shape == (2 * mx + 1, C)
    np.testing.assert_allclose(B, B[::-1], rtol=0, atol=0)
    m, c = mx, C
    assert B[mx + m, c - 1] == pytest.approx(beta(g, m, c), rel=1e-14)
    assert np.all(B > 0)


def test_lattice_to_eigen_rejects_off_family(geom):
    with pytest.raises(ValidationError):
        lattice_to_eigen(2, geom)
