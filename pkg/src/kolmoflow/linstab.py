"""Real linear spectrum of the wall-bounded Kolmogorov flow.

The eigenfunction is expanded as

    psi = exp(i kx x) * sum_n i**n phi_n sin((n + j/(2N)) y),

and the coefficients obey the three-term recurrence

    d_n phi_n = (beta_{n+1} - 1) phi_{n+1} - (beta_{n-1} - 1) phi_{n-1},
    d_n = 2 (1 + lam) beta_n (sigma + lam + beta_n) / (R kx).

The two one-sided tails of the recurrence are continued fractions whose
head values give the dispersion relation between R and sigma.

Internally sigma is carried as the shift ``x = sigma + lam + beta_0`` above
the lower end of the admissible range; near R -> 0 the shift is many orders
of magnitude below lam + beta_0 and would be lost to cancellation otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import brentq

from .domain import GeometryParams, PhysicalParams, eigen_beta, require_admissible
from .errors import BracketError, ConvergenceError, NumericalError, ValidationError

CF_TOL = 1e-13
CF_DEPTH_MAX = 1 << 16
ROOT_TOL = 1e-11
SIGMA_HI_CAP = 1e6
PHI_DECAY_TOL = 1e-14
PHI_DEPTH_CAP = 128
R_CAP = 1e9


@dataclass(frozen=True)
class ContinuedFractionEval:
    """Tail ratios of the recurrence.

    ``gamma_plus[n-1]`` is gamma_{+n} and ``gamma_minus[n-1]`` is gamma_{-n}
    for n = 1..len; with u_n = (beta_n - 1) phi_n they are u_n / u_{n-1} and
    u_{-n} / u_{-n+1}.
    """

    gamma_plus: np.ndarray
    gamma_minus: np.ndarray
    depth_used: int
    converged: bool

    @property
    def head_sum(self) -> float:
        """Sum of the two one-sided fractions, -gamma_{+1} + gamma_{-1}."""
        return float(-self.gamma_plus[0] + self.gamma_minus[0])


@dataclass(frozen=True)
class EigenSolution:
    sigma: float
    shift: float  # sigma + lam + beta_0, kept to full relative precision
    reynolds: float
    lam: float
    geom: GeometryParams
    n: np.ndarray  # eigen indices -M..M
    phi: np.ndarray
    phi_star: np.ndarray
    depth: int
    recurrence_residual: float
    identity_residual: float

    @property
    def beta_n(self) -> np.ndarray:
        return eigen_beta(self.geom, self.n)

    def coefficient(self, n: int) -> float:
        if abs(n) > self.depth:
            return 0.0
        return float(self.phi[n + self.depth])

    @property
    def laplacian_pairing_sum(self) -> float:
        """sum (-1)^n beta_n (beta_n - 1) phi_n^2; negative for every real eigen solution."""
        b = self.beta_n
        return float(np.sum((-1.0) ** self.n * b * (b - 1.0) * self.phi**2))

    @property
    def plain_pairing_sum(self) -> float:
        """sum (-1)^n (beta_n - 1) phi_n^2; negative for every real eigen solution."""
        b = self.beta_n
        return float(np.sum((-1.0) ** self.n * (b - 1.0) * self.phi**2))

    @property
    def dsigma_dR(self) -> float:
        """Analytic derivative of sigma(R) from the differentiated recurrence."""
        b = self.beta_n
        xs = self.shift + (b - b[self.depth])
        num = np.sum(b * xs * (-1.0) ** self.n * (b - 1.0) * self.phi**2)
        return float(num / (self.reynolds * self.laplacian_pairing_sum))


def _scale(phys: PhysicalParams, geom: GeometryParams) -> float:
    """Common factor 2 (1 + lam) / (R kx) of the recurrence diagonal."""
    return 2.0 * (1.0 + phys.lam) / (phys.reynolds * geom.kx)


def _partial_denominators(phys, geom, shift, side: int, depth: int) -> np.ndarray:
    """D_{side*n} for n = 1..depth."""
    n = side * np.arange(1, depth + 1)
    b = eigen_beta(geom, n)
    b0 = float(eigen_beta(geom, 0))
    return _scale(phys, geom) * b * (shift + (b - b0)) / (b - 1.0)


def _tails(dn: np.ndarray) -> np.ndarray:
    """Bottom-up values t_n = D_n + 1/t_{n+1}, starting from t_depth = D_depth."""
    t = np.empty_like(dn)
    acc = dn[-1]
    t[-1] = acc
    for i in range(len(dn) - 2, -1, -1):
        acc = dn[i] + 1.0 / acc
        t[i] = acc
    return t


def _check_shift(shift: float) -> None:
    if not shift >= 0.0 or not math.isfinite(shift):
        raise ValidationError(f"sigma must exceed -lam - beta_0 (shift = {shift})")


def _continued_fractions_shift(phys, geom, shift, depth=16, cf_tol=CF_TOL, depth_max=CF_DEPTH_MAX):
    _check_shift(shift)
    if depth < 1:
        raise ValidationError("depth must be >= 1")
    prev = None
    d = int(depth)
    while True:
        tp = _tails(_partial_denominators(phys, geom, shift, +1, d))
        tm = _tails(_partial_denominators(phys, geom, shift, -1, d))
        head = (tp[0], tm[0])
        if prev is not None:
            dp = abs(head[0] - prev[0]) / abs(head[0])
            dm = abs(head[1] - prev[1]) / abs(head[1])
            if max(dp, dm) < cf_tol:
                return ContinuedFractionEval(-1.0 / tp, 1.0 / tm, d, True)
        if d >= depth_max:
            raise ConvergenceError(
                f"continued fraction did not converge by depth {d}", last_values=(prev, head)
            )
        prev = head
        d = min(2 * d, depth_max)


def continued_fractions(phys: PhysicalParams, geom: GeometryParams, sigma: float, depth: int = 16,
                        *, cf_tol: float = CF_TOL, depth_max: int = CF_DEPTH_MAX) -> ContinuedFractionEval:
    """Evaluate the one-sided continued fractions with depth doubling.

    Raises :class:`ConvergenceError` (carrying the last two head values) when
    the head has not settled to ``cf_tol`` by ``depth_max``.
    """
    shift = sigma + phys.lam + float(eigen_beta(geom, 0))
    return _continued_fractions_shift(phys, geom, shift, depth, cf_tol, depth_max)


def _lhs(phys, geom, shift) -> float:
    b0 = float(eigen_beta(geom, 0))
    return _scale(phys, geom) * b0 * shift / (1.0 - b0)


def _residual_shift(phys, geom, shift) -> float:
    cf = _continued_fractions_shift(phys, geom, shift)
    return _lhs(phys, geom, shift) - cf.head_sum


def dispersion_residual(phys: PhysicalParams, geom: GeometryParams, sigma: float) -> float:
    """2 beta_0 (1+lam)(sigma+lam+beta_0) / (R kx (1-beta_0)) minus the two head fractions.

    Zero exactly on the spectral problem; negative as sigma approaches the
    lower end -lam - beta_0 and positive for large sigma.
    """
    shift = sigma + phys.lam + float(eigen_beta(geom, 0))
    return _residual_shift(phys, geom, shift)


def _root_shift(phys, geom) -> float:
    b0 = float(eigen_beta(geom, 0))
    f = lambda s: _residual_shift(phys, geom, s)
    lo = 0.0
    if f(lo) >= 0.0:
        # head sum is strictly positive, so this can only happen through underflow
        raise BracketError(f"residual non-negative at the lower end for {phys}, {geom}")
    sigma_hi = 1.0
    while True:
        hi = sigma_hi + phys.lam + b0
        if f(hi) > 0.0:
            break
        lo = hi
        sigma_hi *= 2.0
        if sigma_hi > SIGMA_HI_CAP:
            raise BracketError(f"no sign change of the dispersion residual below sigma = {SIGMA_HI_CAP:g}")
    root = brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    res = f(root)
    if abs(res) > ROOT_TOL * max(1.0, _lhs(phys, geom, root)):
        raise ConvergenceError(f"residual {res:.3e} above tolerance at sigma = {root - phys.lam - b0}",
                               last_values=(root,))
    return root


def eigen_from_shift(phys: PhysicalParams, geom: GeometryParams, shift: float) -> EigenSolution:
    """Eigen coefficients and diagnostics at a given (root) shift."""
    b0 = float(eigen_beta(geom, 0))
    cf = _continued_fractions_shift(phys, geom, shift, depth=2 * PHI_DEPTH_CAP + 16)
    gp, gm = cf.gamma_plus, cf.gamma_minus

    up = np.cumprod(gp[:PHI_DEPTH_CAP])  # u_n / u_0
    um = np.cumprod(gm[:PHI_DEPTH_CAP])
    npos = np.arange(1, PHI_DEPTH_CAP + 1)
    phi_p = (b0 - 1.0) * up / (eigen_beta(geom, npos) - 1.0)
    phi_m = (b0 - 1.0) * um / (eigen_beta(geom, -npos) - 1.0)
    scale = max(1.0, np.max(np.abs(phi_p)), np.max(np.abs(phi_m)))
    small = (np.abs(phi_p) < PHI_DECAY_TOL * scale) & (np.abs(phi_m) < PHI_DECAY_TOL * scale)
    depth = int(npos[np.argmax(small)]) if small.any() else PHI_DEPTH_CAP

    n = np.arange(-depth, depth + 1)
    phi = np.concatenate([phi_m[:depth][::-1], [1.0], phi_p[:depth]])
    b = eigen_beta(geom, n)
    phi_star = (-1.0) ** n * (b - 1.0) * phi

    rec = _recurrence_residual(phys, geom, shift, n, phi)
    xs = shift + (b - b0)
    w = b * xs * (b - 1.0) * phi**2
    ident = abs(np.sum(w)) / np.sum(np.abs(w))
    return EigenSolution(
        sigma=shift - phys.lam - b0, shift=shift, reynolds=phys.reynolds, lam=phys.lam, geom=geom,
        n=n, phi=phi, phi_star=phi_star, depth=depth,
        recurrence_residual=rec, identity_residual=float(ident),
    )


def _recurrence_residual(phys, geom, shift, n, phi) -> float:
    b = eigen_beta(geom, n)
    b0 = float(eigen_beta(geom, 0))
    d = _scale(phys, geom) * b * (shift + (b - b0))
    u = (b - 1.0) * phi
    up = np.append(u[1:], 0.0)
    um = np.insert(u[:-1], 0, 0.0)
    r = d * phi - up + um
    return float(np.max(np.abs(r)) / np.max(np.abs(phi)))


def conjugate_residual(sol: EigenSolution) -> float:
    """Max residual of the adjoint recurrence d_n phi*_n = -(beta_n - 1)(phi*_{n+1} - phi*_{n-1}).

    Only rows -M < n < M are checked: at the truncation edge the missing
    neighbour is weighted by beta_M - 1, which can be large.
    """
    phys = PhysicalParams(sol.lam, sol.reynolds)
    b = sol.beta_n
    d = _scale(phys, sol.geom) * b * (sol.shift + (b - b[sol.depth]))
    ps = sol.phi_star
    r = d[1:-1] * ps[1:-1] + (b[1:-1] - 1.0) * (ps[2:] - ps[:-2])
    return float(np.max(np.abs(r)) / np.max(np.abs(ps)))


def sigma_of_R(phys: PhysicalParams, geom: GeometryParams) -> EigenSolution:
    """The unique real eigenvalue sigma(R) and its eigen/conjugate coefficients."""
    require_admissible(geom)
    shift = _root_shift(phys, geom)
    return eigen_from_shift(phys, geom, shift)


def growth_rate(phys: PhysicalParams, geom: GeometryParams) -> float:
    """Physical exponential rate sigma(R) / R of the critical mode."""
    return sigma_of_R(phys, geom).sigma / phys.reynolds


# ---------------------------------------------------------------------------
# Independent oracle: truncated tridiagonal determinant in the shift variable


def _tridiagonal(phys, geom, m_half):
    n = np.arange(-m_half, m_half + 1)
    b = eigen_beta(geom, n)
    b0 = float(eigen_beta(geom, 0))
    w = 1.0 / (_scale(phys, geom) * b)  # row scaling: diagonal becomes shift + beta_n - beta_0
    diag = b - b0
    upper = -(b[1:] - 1.0) * w[:-1]  # entry (n, n+1)
    lower = (b[:-1] - 1.0) * w[1:]  # entry (n+1, n)
    return diag, upper, lower


def _det_signs(shifts, diag, offprod) -> np.ndarray:
    """Signs of det(shift*I + T) for an array of shifts via the ratio form of the recurrence."""
    tiny = np.finfo(float).tiny
    shifts = np.asarray(shifts, dtype=float)
    q = shifts + diag[0]
    sign = np.where(q > 0, 1, -1)
    for k in range(1, len(diag)):
        q = np.where(q == 0.0, tiny, q)
        q = shifts + diag[k] - offprod[k - 1] / q
        sign = np.where(q < 0, -sign, sign)
    return sign


def _det_sign(shift, diag, offprod) -> int:
    return int(_det_signs(shift, diag, offprod))


def _determinant_root(phys, geom, m_half, n_scan=4096) -> float:
    diag, upper, lower = _tridiagonal(phys, geom, m_half)
    offprod = upper * lower
    # Gershgorin bound on real eigenvalues of -T
    radius = np.zeros_like(diag)
    radius[:-1] += np.abs(upper)
    radius[1:] += np.abs(lower)
    hi = float(np.max(-diag + radius))
    if hi <= 0:
        raise BracketError("determinant has no root with sigma > -lam - beta_0")
    grid = np.linspace(0.0, hi * (1 + 1e-9), n_scan)
    signs = _det_signs(grid[::-1], diag, offprod)
    for i in range(1, len(signs)):
        if signs[i] != signs[i - 1]:
            top = grid[::-1][i - 1]
            bot = grid[::-1][i]
            break
    else:
        raise BracketError("no sign change of the truncated determinant in the scan window")
    s_top = _det_sign(top, diag, offprod)
    for _ in range(400):
        mid = 0.5 * (top + bot)
        if mid in (top, bot) or top - bot <= 2 * np.finfo(float).eps * top:
            break
        if _det_sign(mid, diag, offprod) == s_top:
            top = mid
        else:
            bot = mid
    return 0.5 * (top + bot)


def sigma_determinant_oracle(phys: PhysicalParams, geom: GeometryParams, M: int = 16,
                             *, rel_tol: float = 1e-13, m_max: int = 1024,
                             return_shift: bool = False) -> float:
    """Largest real root sigma of the truncated (2M+1) tridiagonal recurrence determinant.

    M is doubled until the root is stable to ``rel_tol``.
    """
    if M < 8:
        raise ValidationError("M must be >= 8")
    require_admissible(geom)
    b0 = float(eigen_beta(geom, 0))
    prev = _determinant_root(phys, geom, M)
    m = M
    while True:
        m *= 2
        if m > m_max:
            raise ConvergenceError("determinant root not stable under M doubling", last_values=(prev,))
        cur = _determinant_root(phys, geom, m)
        if abs(cur - prev) <= rel_tol * max(abs(cur - phys.lam - b0), abs(cur), 1e-300):
            break
        prev = cur
    return cur if return_shift else cur - phys.lam - b0


# ---------------------------------------------------------------------------
# Critical Reynolds number and neutral curve


def critical_reynolds(lam: float, geom: GeometryParams, *, r_start: float = 1.0) -> float:
    """R at which sigma(R) = 0, found by bracketing + Brent on the dispersion residual."""
    require_admissible(geom)
    b0 = float(eigen_beta(geom, 0))
    shift0 = lam + b0

    def f(r):
        return _residual_shift(PhysicalParams(lam, r), geom, shift0)

    lo = r_start
    while f(lo) <= 0:
        lo /= 10.0
        if lo < 1e-12:
            raise BracketError("residual at sigma = 0 not positive for small R")
    hi = lo * 10.0
    while f(hi) > 0:
        lo = hi
        hi *= 10.0
        if hi > R_CAP:
            raise BracketError(f"critical Reynolds number above cap {R_CAP:g}")
    return float(brentq(f, lo, hi, xtol=1e-300, rtol=1e-14, maxiter=500))


@dataclass(frozen=True)
class NeutralPoint:
    kx: float
    reynolds_c: float  # nan on failure
    error: str | None = None


@dataclass(frozen=True)
class NeutralCurve:
    points: list[NeutralPoint]

    @property
    def argmin(self) -> NeutralPoint | None:
        ok = [p for p in self.points if p.error is None]
        return min(ok, key=lambda p: p.reynolds_c) if ok else None


def neutral_curve(lam: float, n_walls: int, j_mode: int, kx_grid) -> NeutralCurve:
    """Critical Reynolds number at each kx; per-point failures are recorded, not raised."""
    kx_grid = list(kx_grid)
    if any(b < a for a, b in zip(kx_grid, kx_grid[1:])):
        raise ValidationError("kx grid must be sorted ascending")
    points = []
    for kx in kx_grid:
        try:
            rc = critical_reynolds(lam, GeometryParams(kx, n_walls, j_mode))
            points.append(NeutralPoint(kx, rc))
        except (ValidationError, NumericalError) as exc:
            points.append(NeutralPoint(kx, math.nan, str(exc)))
    return NeutralCurve(points)
