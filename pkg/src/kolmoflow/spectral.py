"""Galerkin fields on the (m, c) lattice and the exact spectral operators.

A :class:`SpectralField` stores complex coefficients ``a[m, c]`` of

    f(x, y) = sum_{m, c} a[m, c] exp(i m kx x) sin(c y / (2N))

with rows m = -mx_max..mx_max and columns c = 1..c_max.  Real fields satisfy
a[-m, c] = conj(a[m, c]); complex fields (the eigenfunction psi and its
conjugate partner) are allowed and simply skip that constraint.

The bilinear advection term is projected exactly: products are formed on a
padded midpoint grid in y that is wide enough to make the sine/cosine
transforms alias-free for every requested output mode, and the streamwise
harmonics are convolved directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla

from .domain import GeometryParams, PhysicalParams, beta_grid, eigen_to_lattice
from .errors import LatticeOverflowError, SingularBlockError, ValidationError

OVERFLOW_TOL = 1e-13
RCOND_MIN = 1e-13


class SpectralField:
    __slots__ = ("geom", "coeff")

    def __init__(self, geom: GeometryParams, coeff):
        coeff = np.array(coeff, dtype=complex)
        if coeff.ndim != 2 or coeff.shape[0] % 2 != 1 or coeff.shape[1] < 1:
            raise ValidationError(f"coefficient array must have shape (2*mx_max+1, c_max), got {coeff.shape}")
        coeff.flags.writeable = False
        self.geom = geom
        self.coeff = coeff

    # construction ---------------------------------------------------------
    @classmethod
    def zeros(cls, geom, mx_max: int, c_max: int) -> "SpectralField":
        return cls(geom, np.zeros((2 * mx_max + 1, c_max), dtype=complex))

    @classmethod
    def from_modes(cls, geom, mx_max: int, c_max: int, modes: dict) -> "SpectralField":
        """Build from ``{(m, c): value}``; the reality partner is NOT added automatically."""
        a = np.zeros((2 * mx_max + 1, c_max), dtype=complex)
        for (m, c), v in modes.items():
            if abs(m) > mx_max or not 1 <= c <= c_max:
                raise LatticeOverflowError(f"mode ({m}, {c}) outside lattice ({mx_max}, {c_max})")
            a[m + mx_max, c - 1] += v
        return cls(geom, a)

    @classmethod
    def real_mode(cls, geom, mx_max, c_max, m, c, value=1.0) -> "SpectralField":
        """value*e^{imkx} + conj: a real field with a single (m, c) harmonic pair."""
        if m == 0:
            return cls.from_modes(geom, mx_max, c_max, {(0, c): value.real if np.iscomplexobj(value) else value})
        return cls.from_modes(geom, mx_max, c_max, {(m, c): value, (-m, c): np.conj(value)})

    # shape ----------------------------------------------------------------
    @property
    def mx_max(self) -> int:
        return (self.coeff.shape[0] - 1) // 2

    @property
    def c_max(self) -> int:
        return self.coeff.shape[1]

    def __repr__(self):
        return f"SpectralField(mx_max={self.mx_max}, c_max={self.c_max}, norm={self.norm():.6g})"

    def get(self, m: int, c: int) -> complex:
        if abs(m) > self.mx_max or not 1 <= c <= self.c_max:
            return 0j
        return complex(self.coeff[m + self.mx_max, c - 1])

    def block(self, m: int) -> np.ndarray:
        """Coefficients of the e^{imkx} harmonic, indexed by c - 1."""
        if abs(m) > self.mx_max:
            return np.zeros(self.c_max, dtype=complex)
        return self.coeff[m + self.mx_max]

    def only_blocks(self, ms) -> "SpectralField":
        a = np.zeros_like(self.coeff)
        for m in ms:
            if abs(m) <= self.mx_max:
                a[m + self.mx_max] = self.coeff[m + self.mx_max]
        return SpectralField(self.geom, a)

    def resized(self, mx_max: int, c_max: int, truncate: bool = False) -> "SpectralField":
        """Zero-pad or cut to a new lattice; cutting non-zero content needs ``truncate``."""
        if not truncate and (mx_max < self.mx_max or c_max < self.c_max):
            dropped = self.coeff.copy()
            keep_m = slice(self.mx_max - min(mx_max, self.mx_max), self.mx_max + min(mx_max, self.mx_max) + 1)
            dropped[keep_m, : min(c_max, self.c_max)] = 0
            scale = max(np.max(np.abs(self.coeff)), 1e-300)
            if np.max(np.abs(dropped)) > OVERFLOW_TOL * scale:
                raise LatticeOverflowError(
                    f"resizing ({self.mx_max}, {self.c_max}) -> ({mx_max}, {c_max}) drops non-zero modes"
                )
        out = np.zeros((2 * mx_max + 1, c_max), dtype=complex)
        mm = min(mx_max, self.mx_max)
        cc = min(c_max, self.c_max)
        out[mx_max - mm: mx_max + mm + 1, :cc] = self.coeff[self.mx_max - mm: self.mx_max + mm + 1, :cc]
        return SpectralField(self.geom, out)

    # algebra --------------------------------------------------------------
    def _aligned(self, other):
        if self.geom != other.geom:
            raise ValidationError("fields live on different geometries")
        mx = max(self.mx_max, other.mx_max)
        cm = max(self.c_max, other.c_max)
        return self.resized(mx, cm).coeff, other.resized(mx, cm).coeff

    def __add__(self, other):
        a, b = self._aligned(other)
        return SpectralField(self.geom, a + b)

    def __sub__(self, other):
        a, b = self._aligned(other)
        return SpectralField(self.geom, a - b)

    def __neg__(self):
        return SpectralField(self.geom, -self.coeff)

    def __mul__(self, s):
        if isinstance(s, SpectralField):
            return NotImplemented
        return SpectralField(self.geom, self.coeff * s)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return SpectralField(self.geom, self.coeff / s)

    def conj(self) -> "SpectralField":
        """Coefficients of the complex-conjugate function: b[m, c] = conj(a[-m, c])."""
        return SpectralField(self.geom, np.conj(self.coeff[::-1]))

    def real_part(self) -> "SpectralField":
        return SpectralField(self.geom, 0.5 * (self.coeff + np.conj(self.coeff[::-1])))

    def imag_part(self) -> "SpectralField":
        return SpectralField(self.geom, (self.coeff - np.conj(self.coeff[::-1])) / 2j)

    def reality_defect(self) -> float:
        return float(np.max(np.abs(self.coeff - np.conj(self.coeff[::-1])), initial=0.0))

    def is_real(self, tol: float = 1e-12) -> bool:
        scale = max(float(np.max(np.abs(self.coeff), initial=0.0)), 1e-300)
        return self.reality_defect() <= tol * scale

    def enforce_reality(self) -> "SpectralField":
        return self.real_part()

    def shifted(self, dx: float) -> "SpectralField":
        """The field translated downstream: g(x) = f(x - dx)."""
        m = np.arange(-self.mx_max, self.mx_max + 1)
        phase = np.exp(-1j * m * self.geom.kx * dx)
        return SpectralField(self.geom, self.coeff * phase[:, None])

    def norm(self) -> float:
        return math.sqrt(max(inner(self, self).real, 0.0))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeff)))


def _beta(f: SpectralField) -> np.ndarray:
    return beta_grid(f.geom, f.mx_max, f.c_max)


def _mvec(f: SpectralField) -> np.ndarray:
    return np.arange(-f.mx_max, f.mx_max + 1)[:, None]


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.geom, -_beta(f) * f.coeff)


def inverse_laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.geom, -f.coeff / _beta(f))


def inner(f: SpectralField, g: SpectralField) -> complex:
    """<f, g> = integral of f * conj(g) over one streamwise period and the duct."""
    a, b = f._aligned(g)
    w = (2 * math.pi / f.geom.kx) * (f.geom.n_walls * math.pi)
    return complex(w * np.vdot(b, a))


# ---------------------------------------------------------------------------
# advection N(f, g) = f_x (Lap g)_y - f_y (Lap g)_x


def _grid_size(c_f: int, c_g: int, c_out: int) -> int:
    # midpoint sine/cosine transforms on P points: product modes above P fold to 2P - c,
    # which must land beyond c_out
    need = max(c_out + 1, (c_f + c_g + c_out) // 2 + 1)
    return sfft.next_fast_len(need, real=True)


def _sin_eval(a: np.ndarray, P: int) -> np.ndarray:
    """Values of sum_c a[..., c-1] sin(c Y) at the P midpoints Y_p = pi (2p+1)/(2P)."""
    x = np.zeros(a.shape[:-1] + (P,), dtype=a.dtype)
    x[..., : a.shape[-1]] = 0.5 * a
    return sfft.dst(x, type=3, axis=-1)


def _cos_eval(a: np.ndarray, P: int) -> np.ndarray:
    """Values of sum_{c>=1} a[..., c-1] cos(c Y) at the P midpoints."""
    x = np.zeros(a.shape[:-1] + (P,), dtype=a.dtype)
    x[..., 1: a.shape[-1] + 1] = 0.5 * a
    return sfft.dct(x, type=3, axis=-1)


def _sin_project(h: np.ndarray, c_out: int) -> np.ndarray:
    P = h.shape[-1]
    return sfft.dst(h, type=2, axis=-1)[..., :c_out] / P


def advection(f: SpectralField, g: SpectralField, mx_out: int | None = None, c_out: int | None = None,
              truncate: bool = False) -> SpectralField:
    """Exact Galerkin projection of N(f, g) = f_x (Lap g)_y - f_y (Lap g)_x.

    The default output lattice (mx_f + mx_g, c_f + c_g) holds the product
    exactly.  A smaller output lattice must be requested with ``truncate=True``
    unless the dropped modes are zero.
    """
    if f.geom != g.geom:
        raise ValidationError("fields live on different geometries")
    full_mx = f.mx_max + g.mx_max
    full_c = f.c_max + g.c_max
    mx_out = full_mx if mx_out is None else mx_out
    c_out = full_c if c_out is None else c_out
    if not truncate and (mx_out < full_mx or c_out < full_c):
        full = _advection(f, g, full_mx, full_c)
        return full.resized(max(mx_out, 0), c_out, truncate=False)
    return _advection(f, g, mx_out, c_out)


def _advection(f, g, mx_out, c_out) -> SpectralField:
    geom = f.geom
    kx = geom.kx
    P = _grid_size(f.c_max, g.c_max, c_out)
    kap_f = np.arange(1, f.c_max + 1) / geom.denom
    kap_g = np.arange(1, g.c_max + 1) / geom.denom
    mf = _mvec(f)
    mg = _mvec(g)
    bg = _beta(g)

    fx = _sin_eval(1j * mf * kx * f.coeff, P)
    fy = _cos_eval(kap_f * f.coeff, P)
    gyl = _cos_eval(-bg * kap_g * g.coeff, P)
    gxl = _sin_eval(-bg * 1j * mg * kx * g.coeff, P)

    nf, ng = fx.shape[0], gyl.shape[0]
    full_mx = f.mx_max + g.mx_max
    h = np.zeros((2 * full_mx + 1, P), dtype=complex)
    for i in range(nf):
        # row i of f (m1 = i - mx_f) pairs with all m2; output row index m1 + m2 + full_mx = i + k
        h[i: i + ng] += fx[i] * gyl - fy[i] * gxl
    lo = full_mx - min(mx_out, full_mx)
    rows = h[lo: 2 * full_mx + 1 - lo]
    out = np.zeros((2 * mx_out + 1, c_out), dtype=complex)
    mm = min(mx_out, full_mx)
    out[mx_out - mm: mx_out + mm + 1] = _sin_project(rows, c_out)
    return SpectralField(geom, out)


# ---------------------------------------------------------------------------
# linearised operator about the basic flow psi_0 = sin(y)/(1+lam)


def _cos_y_times(g: np.ndarray, denom: int, c_out: int) -> np.ndarray:
    """Coefficients of cos(y) * (sine series g) along the last axis, on c = 1..c_out."""
    C = g.shape[-1]
    out = np.zeros(g.shape[:-1] + (c_out,), dtype=complex)
    c = np.arange(1, C + 1)
    # sin(k y) cos y = (sin((k+1) y) + sin((k-1) y)) / 2
    up = c + denom
    ok = up <= c_out
    out[..., up[ok] - 1] += 0.5 * g[..., ok]
    dn = c - denom
    pos = (dn >= 1) & (dn <= c_out)
    out[..., dn[pos] - 1] += 0.5 * g[..., pos]
    neg = (dn <= -1) & (-dn <= c_out)
    out[..., -dn[neg] - 1] -= 0.5 * g[..., neg]
    return out


def apply_L(phys: PhysicalParams, geom: GeometryParams, f: SpectralField, truncate: bool = False) -> SpectralField:
    """L f = -(lam/R) Lap f + (1/R) Lap^2 f - cos(y) (Lap + 1) f_x / (1 + lam).

    The cos(y) factor raises c by 2N, so the exact result lives on c_max + 2N
    unless ``truncate`` keeps the input lattice.
    """
    if f.geom != geom:
        raise ValidationError("field geometry does not match")
    b = _beta(f)
    c_out = f.c_max if truncate else f.c_max + geom.denom
    diag = b * (b + phys.lam) / phys.reynolds * f.coeff
    g = 1j * _mvec(f) * geom.kx * (1.0 - b) * f.coeff
    out = -_cos_y_times(g, geom.denom, c_out) / (1.0 + phys.lam)
    out[:, : f.c_max] += diag
    return SpectralField(geom, out)


def block_matrix(phys: PhysicalParams, geom: GeometryParams, m: int, c_max: int) -> np.ndarray:
    """Dense Galerkin matrix of L restricted to harmonic m on c = 1..c_max."""
    c = np.arange(1, c_max + 1)
    b = (m * geom.kx) ** 2 + (c * c) / float(geom.denom**2)
    A = np.diag((b * (b + phys.lam) / phys.reynolds).astype(complex))
    g = np.diag(1j * m * geom.kx * (1.0 - b))
    A -= _cos_y_times(g, geom.denom, c_max).T / (1.0 + phys.lam)
    return A


def _to_banded(A: np.ndarray, width: int) -> np.ndarray:
    n = A.shape[0]
    ab = np.zeros((2 * width + 1, n), dtype=A.dtype)
    for k in range(-width, width + 1):
        d = np.diagonal(A, k)
        if k >= 0:
            ab[width - k, k:] = d
        else:
            ab[width - k, : n + k] = d
    return ab


def solve_L_block(phys: PhysicalParams, geom: GeometryParams, m: int, rhs: np.ndarray,
                  check_condition: bool = True, rcond_min: float = RCOND_MIN) -> np.ndarray:
    """Solve L u = rhs within harmonic m (banded system, couplings at c +- 2N)."""
    rhs = np.asarray(rhs, dtype=complex)
    c_max = rhs.shape[0]
    if m == 0:
        c = np.arange(1, c_max + 1)
        b = (c * c) / float(geom.denom**2)
        return rhs * phys.reynolds / (b * (b + phys.lam))
    A = block_matrix(phys, geom, m, c_max)
    if check_condition:
        lu, piv = sla.lu_factor(A, check_finite=False)
        anorm = np.linalg.norm(A, 1)
        rcond, info = sla.lapack.zgecon(lu, anorm, norm="1")
        if info != 0 or rcond < rcond_min:
            raise SingularBlockError(f"block m = {m} is (near-)singular: rcond = {rcond:.3e}", block=m)
    w = geom.denom
    return sla.solve_banded((w, w), _to_banded(A, w), rhs, check_finite=False)


def solve_L(phys: PhysicalParams, rhs: SpectralField, blocks=None) -> SpectralField:
    """Blockwise L^{-1} on the rhs lattice (Galerkin truncation of L)."""
    out = np.zeros_like(rhs.coeff)
    M = rhs.mx_max
    for m in range(-M, M + 1) if blocks is None else blocks:
        row = rhs.coeff[m + M]
        if not np.any(row):
            continue
        out[m + M] = solve_L_block(phys, rhs.geom, m, row)
    return SpectralField(rhs.geom, out)


# ---------------------------------------------------------------------------
# basic flow and eigenfunctions


def basic_flow(phys: PhysicalParams, geom: GeometryParams, mx_max: int = 0, c_max: int | None = None) -> SpectralField:
    """psi_0 = sin(y) / (1 + lam)."""
    c_max = geom.forcing_c if c_max is None else c_max
    return SpectralField.from_modes(geom, mx_max, c_max, {(0, geom.forcing_c): 1.0 / (1.0 + phys.lam)})


@dataclass(frozen=True)
class EigenFields:
    psi: SpectralField  # complex eigenfunction, harmonic m = 1 only
    psi_star: SpectralField  # complex conjugate eigenfunction
    psi1: SpectralField
    psi2: SpectralField
    psi1_star: SpectralField
    psi2_star: SpectralField


def eigen_coefficients_to_field(geom: GeometryParams, n, coef, c_max: int | None = None) -> SpectralField:
    """exp(i kx x) sum_n i^n coef_n sin((n + j/(2N)) y) as a (complex) lattice field."""
    n = np.asarray(n)
    cs = np.abs(geom.denom * n + geom.j_mode)
    c_max = int(cs.max()) if c_max is None else c_max
    a = np.zeros((3, c_max), dtype=complex)
    for nn, v in zip(n, coef):
        mode, sign, quarter = eigen_to_lattice(int(nn), geom)
        if mode.c <= c_max:
            a[2, mode.c - 1] += sign * (1j**quarter) * v
    return SpectralField(geom, a)


def eigenfields(phys: PhysicalParams, geom: GeometryParams, eig, c_max: int | None = None) -> EigenFields:
    """Lattice fields of the eigenfunction, its conjugate and their real/imaginary parts."""
    psi = eigen_coefficients_to_field(geom, eig.n, eig.phi, c_max)
    psi_star = eigen_coefficients_to_field(geom, eig.n, eig.phi_star, c_max)
    return EigenFields(
        psi=psi,
        psi_star=psi_star,
        psi1=psi.real_part(),
        psi2=psi.imag_part(),
        psi1_star=psi_star.real_part(),
        psi2_star=psi_star.imag_part(),
    )


# ---------------------------------------------------------------------------
# physical-space sampling


def sample_grid(f: SpectralField, nx: int, ny: int, x_range=None, y_range=None):
    """Evaluate f on an nx-by-ny tensor grid; returns (x, y, values[ny, nx]).

    Defaults cover three streamwise periods centred on x = 0 and the full duct.
    Values are real for real fields.
    """
    if nx < 2 or ny < 2:
        raise ValidationError("nx and ny must be >= 2")
    geom = f.geom
    if x_range is None:
        x_range = (-3 * math.pi / geom.kx, 3 * math.pi / geom.kx)
    if y_range is None:
        y_range = (0.0, geom.height)
    x = np.linspace(x_range[0], x_range[1], nx)
    y = np.linspace(y_range[0], y_range[1], ny)
    m = np.arange(-f.mx_max, f.mx_max + 1)
    c = np.arange(1, f.c_max + 1)
    E = np.exp(1j * geom.kx * np.outer(m, x))  # (2M+1, nx)
    S = np.sin(np.outer(y, c) / geom.denom)  # (ny, C)
    vals = S @ f.coeff.T @ E
    if f.is_real():
        vals = vals.real
    # the basis vanishes on both walls; remove rounding residue there
    for row, yy in ((0, y[0]), (-1, y[-1])):
        if yy == 0.0 or yy == geom.height:
            vals[row] = 0.0
    return x, y, vals
