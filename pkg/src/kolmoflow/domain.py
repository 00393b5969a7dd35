"""Parameter objects and the (m, c) mode lattice.

Every field in the package is expanded on modes

    exp(i m kx x) * sin(c y / (2N)),   c = 1, 2, ...

on the duct 0 <= y <= 2*N*pi.  The wall-normal wavenumber is kept as the
integer numerator ``c`` over the fixed denominator ``2N`` so that every
wavenumber generated by products of modes stays on one integer lattice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import math

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class PhysicalParams:
    """Friction number ``lam`` (lambda) and Reynolds number ``reynolds``."""

    lam: float
    reynolds: float

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValidationError(f"lambda must be finite and >= 0, got {self.lam}")
        if not self.reynolds > 0:
            raise ValidationError(f"reynolds must be > 0, got {self.reynolds}")
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "reynolds", float(self.reynolds))

    def with_reynolds(self, reynolds: float) -> "PhysicalParams":
        return PhysicalParams(self.lam, reynolds)


@dataclass(frozen=True)
class GeometryParams:
    """Streamwise wavenumber, duct half-count N (height 2*N*pi) and mode j."""

    kx: float
    n_walls: int
    j_mode: int
    alpha: Fraction = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.kx > 0 and math.isfinite(self.kx)):
            raise ValidationError(f"kx must be finite and > 0, got {self.kx}")
        if int(self.n_walls) != self.n_walls or self.n_walls < 2:
            raise ValidationError(f"n_walls must be an integer >= 2, got {self.n_walls}")
        if int(self.j_mode) != self.j_mode or not 1 <= self.j_mode <= self.n_walls - 1:
            raise ValidationError(
                f"j_mode must be an integer in [1, N-1] = [1, {self.n_walls - 1}], got {self.j_mode}"
            )
        object.__setattr__(self, "kx", float(self.kx))
        object.__setattr__(self, "n_walls", int(self.n_walls))
        object.__setattr__(self, "j_mode", int(self.j_mode))
        object.__setattr__(self, "alpha", Fraction(self.j_mode, 2 * self.n_walls))

    @property
    def denom(self) -> int:
        """Lattice denominator 2N."""
        return 2 * self.n_walls

    @property
    def forcing_c(self) -> int:
        """Lattice numerator of the forcing mode sin(y)."""
        return 2 * self.n_walls

    @property
    def height(self) -> float:
        return 2 * self.n_walls * math.pi

    @property
    def length(self) -> float:
        """Streamwise period 2*pi/kx."""
        return 2 * math.pi / self.kx

    def with_kx(self, kx: float) -> "GeometryParams":
        return GeometryParams(kx, self.n_walls, self.j_mode)


@dataclass(frozen=True)
class ModeIndex:
    m: int
    c: int

    def __post_init__(self):
        if self.c < 1:
            raise ValidationError(f"lattice numerator c must be >= 1, got {self.c}")


def beta(geom: GeometryParams, m: int, c: int) -> float:
    """Squared wavenumber (m kx)^2 + (c/(2N))^2 of lattice mode (m, c)."""
    if int(c) != c or c < 1:
        raise ValidationError(f"lattice numerator c must be a positive integer, got {c}")
    kappa_sq = Fraction(int(c), geom.denom) ** 2
    return (m * geom.kx) ** 2 + float(kappa_sq)


def beta_grid(geom: GeometryParams, mx_max: int, c_max: int) -> np.ndarray:
    """beta(m, c) on the full lattice, shape (2*mx_max+1, c_max), rows m = -mx_max..mx_max."""
    m = np.arange(-mx_max, mx_max + 1, dtype=float)[:, None]
    c = np.arange(1, c_max + 1)
    kappa_sq = (c * c) / float(geom.denom**2)
    return (m * geom.kx) ** 2 + kappa_sq[None, :]


def eigen_beta(geom: GeometryParams, n) -> np.ndarray:
    """beta_n = kx^2 + (n + j/(2N))^2 for eigen indices n (array-friendly)."""
    n = np.asarray(n)
    num = geom.denom * n + geom.j_mode
    return geom.kx**2 + (num * num) / float(geom.denom**2)


@dataclass(frozen=True)
class Admissibility:
    ok: bool
    beta_0: float
    beta_m1: float

    def __bool__(self):
        return bool(self.ok)

    def describe(self) -> str:
        return (
            f"beta_0 = {self.beta_0:.6g} (needs < 1), "
            f"beta_-1 = {self.beta_m1:.6g} (needs > 1): {'admissible' if self.ok else 'NOT admissible'}"
        )


def check_admissible(geom: GeometryParams) -> Admissibility:
    """Window condition beta(1, j) < 1 < beta(1, 2N - j) for a real critical eigenvalue."""
    b0 = beta(geom, 1, geom.j_mode)
    bm1 = beta(geom, 1, geom.denom - geom.j_mode)
    return Admissibility(bool(b0 < 1.0 and bm1 > 1.0), b0, bm1)


def require_admissible(geom: GeometryParams) -> None:
    adm = check_admissible(geom)
    if not adm:
        raise ValidationError(f"geometry {geom} is not admissible: {adm.describe()}")


def eigen_to_lattice(n: int, geom: GeometryParams) -> tuple[ModeIndex, int, int]:
    """Map eigen index n (wavenumber n + j/(2N)) to (mode, sign, quarter_turn).

    ``sign`` accounts for sin(-k y) = -sin(k y) and ``quarter_turn = n mod 4``
    records the i**n factor carried by the eigen expansion.
    """
    num = geom.denom * int(n) + geom.j_mode
    sign = 1 if num > 0 else -1
    return ModeIndex(1, abs(num)), sign, int(n) % 4


def lattice_to_eigen(c: int, geom: GeometryParams) -> int:
    """Inverse of :func:`eigen_to_lattice`; raises if c is not on the eigen family."""
    if (c - geom.j_mode) % geom.denom == 0:
        return (c - geom.j_mode) // geom.denom
    if (c + geom.j_mode) % geom.denom == 0:
        return (-c - geom.j_mode) // geom.denom
    raise ValidationError(f"c = {c} is not congruent to +-j mod 2N for {geom}")
