"""Centre-manifold reduction at the critical Reynolds number.

Near R_c the perturbation phi of the basic flow is written as
s1*psi1 + s2*psi2 + h with h quadratic in (s1, s2).  Projecting onto the
normalised conjugate fields gives, with X = s1 + i s2,

    dX/dt = mu X - (a + b) X |X|^2 + ...,   mu = sigma(R)/R,

so steady secondary states form a circle of radius sqrt(mu/(a+b)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .domain import GeometryParams, PhysicalParams, check_admissible, require_admissible
from .errors import NoBranchError, NumericalError, ValidationError
from .linstab import EigenSolution, critical_reynolds, sigma_of_R
from .spectral import (
    EigenFields,
    SpectralField,
    advection,
    basic_flow,
    eigenfields,
    inner,
    laplacian,
    solve_L,
)

PAIRING_MIN = 1e-12
PURITY_TOL = 1e-12
IMAG_TOL = 1e-8
EPS_WARN = 0.2
COINCIDENT_RC = 1e-3


@dataclass(frozen=True)
class NormalizedPair:
    psi_star: SpectralField  # complex, <Lap psi, psi_star> = 2
    psi1_star: SpectralField
    psi2_star: SpectralField
    scale: float  # factor applied to the raw conjugate fields
    raw_pairing: float  # <Lap psi1, psi1_star> before scaling


def normalize_pair(fields: EigenFields) -> NormalizedPair:
    """Scale the conjugates so that <Lap psi_i, psi_j*> = delta_ij."""
    p11 = inner(laplacian(fields.psi1), fields.psi1_star)
    p22 = inner(laplacian(fields.psi2), fields.psi2_star)
    if abs(p11) < PAIRING_MIN * max(fields.psi1.norm() * fields.psi1_star.norm(), 1e-300):
        raise NumericalError(f"degenerate eigen/conjugate pairing {p11:.3e}")
    if abs(p22 - p11) > 1e-9 * abs(p11):
        raise NumericalError(f"real and imaginary pairings differ: {p11} vs {p22}")
    scale = 1.0 / p11.real
    return NormalizedPair(
        psi_star=fields.psi_star * scale,
        psi1_star=fields.psi1_star * scale,
        psi2_star=fields.psi2_star * scale,
        scale=scale,
        raw_pairing=p11.real,
    )


def _inv_L(phys, rhs: SpectralField, c_max: int) -> SpectralField:
    """L^{-1} on blocks m != +-1 after checking the rhs has no m = +-1 content."""
    M = rhs.mx_max
    scale = max(float(np.max(np.abs(rhs.coeff))), 1e-300)
    for m in (-1, 1):
        if abs(m) <= M and np.max(np.abs(rhs.block(m))) > PURITY_TOL * scale:
            raise NumericalError(f"quadratic forcing has content in critical block m = {m}")
    rhs = rhs.resized(M, c_max, truncate=True)
    blocks = [m for m in range(-M, M + 1) if abs(m) != 1]
    return solve_L(phys, rhs, blocks=blocks)


@dataclass(frozen=True)
class CenterManifoldData:
    phys: PhysicalParams  # at R = R_c
    geom: GeometryParams
    eig: EigenSolution
    fields: EigenFields
    pair: NormalizedPair
    chi: dict  # (i, j) -> chi_ij = -L^{-1} N(psi_i, psi_j), i, j in {1, 2}
    # complex-form quadratic terms
    n_pp: SpectralField  # N(psi, psi), block m = 2
    n_mix: SpectralField  # N(psi, conj psi) + N(conj psi, psi), block m = 0
    n_cc: SpectralField  # N(conj psi, conj psi), block m = -2
    c_solve: int = field(default=0)

    @property
    def normalization_scale(self) -> float:
        return self.pair.scale


def quadratic_manifold(phys: PhysicalParams, geom: GeometryParams, eig: EigenSolution | None = None,
                       c_solve: int | None = None) -> CenterManifoldData:
    """Quadratic centre-manifold fields at phys (meant to be R = R_c)."""
    require_admissible(geom)
    eig = sigma_of_R(phys, geom) if eig is None else eig
    fields = eigenfields(phys, geom, eig)
    pair = normalize_pair(fields)
    C = fields.psi.c_max
    c_solve = 2 * C + 4 * geom.denom if c_solve is None else c_solve
    psi, psib = fields.psi, fields.psi.conj()
    n_pp = advection(psi, psi)
    n_mix = advection(psi, psib) + advection(psib, psi)
    n_cc = advection(psib, psib)
    ps = {1: fields.psi1, 2: fields.psi2}
    chi = {}
    for i in (1, 2):
        for j in (1, 2):
            chi[i, j] = -_inv_L(phys, advection(ps[i], ps[j]), c_solve)
    return CenterManifoldData(phys, geom, eig, fields, pair, chi, n_pp, n_mix, n_cc, c_solve)


@dataclass(frozen=True)
class LandauCoefficients:
    a: float
    b: float
    imag_residue: float  # max relative imaginary part of a, b
    real_form: float  # a + b from the real (psi1, psi2) reduction
    nondegeneracy: complex  # the four-term sum conjugate to 8 (a + b)

    @property
    def a_plus_b(self) -> float:
        return self.a + self.b

    @property
    def supercritical(self) -> bool:
        return self.a_plus_b > 0


def landau_coefficients(data: CenterManifoldData) -> LandauCoefficients:
    """Cubic coefficients a, b of the amplitude equation dX/dt = mu X - (a+b) X|X|^2."""
    phys, C = data.phys, data.c_solve
    psi = data.fields.psi
    psib = psi.conj()
    star_b = data.pair.psi_star.conj()
    star = data.pair.psi_star
    u_cc = _inv_L(phys, data.n_cc, C)
    u_mix = _inv_L(phys, data.n_mix, C)
    u_pp = _inv_L(phys, data.n_pp, C)

    a = (inner(advection(psi, u_cc), star_b) + inner(advection(psib, u_mix), star_b)) / 8
    b = (inner(advection(u_cc, psi), star_b) + inner(advection(u_mix, psib), star_b)) / 8
    scale = max(abs(a), abs(b), abs(a + b), 1e-300)
    resid = max(abs(a.imag), abs(b.imag)) / scale
    if resid > IMAG_TOL:
        raise NumericalError(f"Landau coefficients not real: a = {a}, b = {b}")

    nondeg = (
        inner(advection(psib, u_pp), star)
        + inner(advection(psi, u_mix), star)
        + inner(advection(u_pp, psib), star)
        + inner(advection(u_mix, psi), star)
    )
    chi11 = data.chi[1, 1]
    psi1 = data.fields.psi1
    real_form = -inner(advection(psi1, chi11) + advection(chi11, psi1), data.pair.psi1_star).real
    return LandauCoefficients(float(a.real), float(b.real), float(resid), float(real_form), complex(nondeg))


def check_simple_critical(lam: float, geom: GeometryParams, reynolds_c: float | None = None) -> list[tuple[int, float]]:
    """Other admissible modes j' at the same kx whose R_c lies within 0.1% of this one.

    A warning is emitted for each; an empty list means the critical value is simple
    among the wall modes checked.
    """
    rc = critical_reynolds(lam, geom) if reynolds_c is None else reynolds_c
    close = []
    for jj in range(1, geom.n_walls):
        if jj == geom.j_mode:
            continue
        g2 = GeometryParams(geom.kx, geom.n_walls, jj)
        if not check_admissible(g2):
            continue
        try:
            r2 = critical_reynolds(lam, g2)
        except NumericalError:
            continue
        if abs(r2 - rc) <= COINCIDENT_RC * rc:
            warnings.warn(f"critical Reynolds numbers for j={geom.j_mode} and j={jj} coincide within 0.1%",
                          RuntimeWarning, stacklevel=2)
            close.append((jj, r2))
    return close


@dataclass(frozen=True)
class SecondaryFlowSpec:
    reynolds: float
    reynolds_c: float
    mu: float
    amplitude: float  # epsilon = |X|
    theta: float
    order: int
    field: SpectralField
    landau: LandauCoefficients
    s1: float
    s2: float


@dataclass
class BifurcationModel:
    """Cached centre-manifold data for one (lam, geometry); evaluate branches at any R."""

    lam: float
    geom: GeometryParams
    reynolds_c: float = field(init=False)
    data: CenterManifoldData = field(init=False)
    landau: LandauCoefficients = field(init=False)

    def __post_init__(self):
        require_admissible(self.geom)
        self.reynolds_c = critical_reynolds(self.lam, self.geom)
        self.data = quadratic_manifold(PhysicalParams(self.lam, self.reynolds_c), self.geom)
        self.landau = landau_coefficients(self.data)

    def mu(self, reynolds: float) -> float:
        if reynolds == self.reynolds_c:
            return 0.0
        return sigma_of_R(PhysicalParams(self.lam, reynolds), self.geom).sigma / reynolds

    def amplitude(self, reynolds: float) -> float:
        mu = self.mu(reynolds)
        ratio = mu / self.landau.a_plus_b
        if ratio < 0:
            side = "above" if reynolds > self.reynolds_c else "below"
            raise NoBranchError(f"no steady branch {side} R_c = {self.reynolds_c:.6g} (mu/(a+b) = {ratio:.3e} < 0)")
        return math.sqrt(ratio)

    def secondary_flow(self, reynolds: float, theta: float = 0.0, order: int = 1) -> SecondaryFlowSpec:
        if order not in (1, 2):
            raise ValidationError(f"order must be 1 or 2, got {order}")
        mu = self.mu(reynolds)
        eps = self.amplitude(reynolds)
        s1, s2 = eps * math.cos(theta), eps * math.sin(theta)
        f = self.data.fields
        phys = PhysicalParams(self.lam, reynolds)
        pert = f.psi1 * s1 + f.psi2 * s2
        if order == 2:
            ch = self.data.chi
            pert = pert + ch[1, 1] * (s1 * s1) + (ch[1, 2] + ch[2, 1]) * (s1 * s2) + ch[2, 2] * (s2 * s2)
        psi0 = basic_flow(phys, self.geom)
        if pert.norm() > EPS_WARN * psi0.norm():
            warnings.warn(f"amplitude {eps:.3g} is large; the local expansion is advisory only",
                          RuntimeWarning, stacklevel=2)
        return SecondaryFlowSpec(
            reynolds=float(reynolds),
            reynolds_c=self.reynolds_c,
            mu=mu,
            amplitude=eps,
            theta=float(theta) % (2 * math.pi),
            order=order,
            field=(psi0 + pert).enforce_reality(),
            landau=self.landau,
            s1=s1,
            s2=s2,
        )


def secondary_flow(phys: PhysicalParams, geom: GeometryParams, theta: float = 0.0, order: int = 1) -> SecondaryFlowSpec:
    """Secondary steady state on the bifurcating circle at phase theta."""
    model = BifurcationModel(phys.lam, geom)
    check_simple_critical(phys.lam, geom, model.reynolds_c)
    return model.secondary_flow(phys.reynolds, theta, order)
