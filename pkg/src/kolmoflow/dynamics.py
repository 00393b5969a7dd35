"""Time integration of the forced, damped vorticity equation on the Galerkin lattice.

Modewise the stream-function coefficients obey

    da/dt = -((beta + lam)/R) a - J/beta + F/beta,

with J the (truncated) advection N(psi, psi) and F = 1/R on the forcing mode
sin(y) only.  The diagonal linear part is integrated exactly and the
nonlinear part with the second-order exponential Runge-Kutta scheme of Cox
and Matthews (ETDRK2).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import combinations
import math

import numpy as np
from scipy.optimize import minimize_scalar

from .domain import GeometryParams, PhysicalParams, beta_grid
from .errors import BlowUpError, ValidationError
from .spectral import SpectralField, advection, basic_flow, inner, laplacian

BLOWUP = 1e9
STEADY_WINDOW = 10


@dataclass(frozen=True)
class SimConfig:
    phys: PhysicalParams
    geom: GeometryParams
    mx_max: int = 2
    c_max: int | None = None  # default 64 N
    dt: float = 0.5
    t_end: float = 1000.0
    steady_tol: float = 1e-10
    snapshot_every: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.c_max is None:
            object.__setattr__(self, "c_max", 32 * self.geom.denom)
        if not self.dt > 0 or not math.isfinite(self.dt):
            raise ValidationError(f"dt must be finite and > 0, got {self.dt}")
        if not self.steady_tol > 0:
            raise ValidationError(f"steady_tol must be > 0, got {self.steady_tol}")
        if int(self.mx_max) != self.mx_max or self.mx_max < 1:
            raise ValidationError(f"mx_max must be a positive integer, got {self.mx_max}")
        if int(self.c_max) != self.c_max or self.c_max < self.geom.forcing_c:
            raise ValidationError(f"c_max must be an integer >= 2N = {self.geom.forcing_c}, got {self.c_max}")
        if not self.t_end >= 0:
            raise ValidationError(f"t_end must be >= 0, got {self.t_end}")
        if not self.snapshot_every > 0:
            raise ValidationError(f"snapshot_every must be > 0, got {self.snapshot_every}")

    @property
    def beta(self) -> np.ndarray:
        return beta_grid(self.geom, self.mx_max, self.c_max)

    @property
    def dt_effective(self) -> float:
        """min(0.5 R / (beta_max + lam), dt)."""
        cap = 0.5 * self.phys.reynolds / (float(self.beta.max()) + self.phys.lam)
        return min(cap, self.dt)

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)

    def basic_flow(self) -> SpectralField:
        return basic_flow(self.phys, self.geom, self.mx_max, self.c_max)


@dataclass(frozen=True)
class SimState:
    t: float
    field: SpectralField
    phys: PhysicalParams
    residual: float = math.nan
    steps: int = 0

    @property
    def energy_split(self) -> np.ndarray:
        """Kinetic energy 0.5 * integral |grad psi|^2 carried by each (m, c) mode."""
        f = self.field
        w = (2 * math.pi / f.geom.kx) * (f.geom.n_walls * math.pi)
        return 0.5 * w * beta_grid(f.geom, f.mx_max, f.c_max) * np.abs(f.coeff) ** 2

    def perturbation(self) -> SpectralField:
        return self.field - basic_flow(self.phys, self.field.geom)


class _Integrator:
    """Precomputed ETDRK2 factors for one configuration."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.dt = config.dt_effective
        b = config.beta
        self.beta = b
        R = config.phys.reynolds
        rate = -(b + config.phys.lam) / R  # exactly 0 when R = inf and lam = 0
        z = rate * self.dt
        self.e = np.exp(z)
        small = np.abs(z) < 1e-5
        zs = np.where(small, 1.0, z)
        phi1 = np.where(small, 1 + z / 2 + z * z / 6, np.expm1(zs) / zs)
        phi2 = np.where(small, 0.5 + z / 6 + z * z / 24, (np.expm1(zs) - zs) / (zs * zs))
        self.h1 = self.dt * phi1
        self.h2 = self.dt * phi2
        self.rate = rate
        force = np.zeros_like(b)
        force[config.mx_max, config.geom.forcing_c - 1] = 1.0 / R
        self.force = force / b

    def nonlinear(self, a: np.ndarray) -> np.ndarray:
        cfg = self.config
        f = SpectralField(cfg.geom, a)
        J = advection(f, f, cfg.mx_max, cfg.c_max, truncate=True).coeff
        return self.force - J / self.beta

    def step(self, a: np.ndarray) -> np.ndarray:
        n0 = self.nonlinear(a)
        b = self.e * a + self.h1 * n0
        n1 = self.nonlinear(b)
        out = b + self.h2 * (n1 - n0)
        # keep the field exactly real
        return 0.5 * (out + np.conj(out[::-1]))

    def rhs(self, a: np.ndarray) -> np.ndarray:
        return self.rate * a + self.nonlinear(a)


def rhs(phys: PhysicalParams, geom: GeometryParams, f: SpectralField) -> SpectralField:
    """Time derivative of the stream-function coefficients on f's lattice."""
    if f.geom != geom:
        raise ValidationError("field geometry does not match")
    cfg = SimConfig(phys, geom, mx_max=f.mx_max, c_max=f.c_max)
    return SpectralField(geom, _Integrator(cfg).rhs(f.coeff))


def _check(a: np.ndarray, t: float):
    if not np.all(np.isfinite(a)) or np.max(np.abs(a)) > BLOWUP:
        raise BlowUpError(f"solution blew up at t = {t:.6g}", t=t)


def _residual(integ: _Integrator, a: np.ndarray) -> float:
    d = np.linalg.norm(integ.rhs(a))
    n = np.linalg.norm(a)
    return float(d / n) if n > 0 else float(d)


def initial_state(config: SimConfig, initial: SpectralField | None = None, t: float = 0.0) -> SimState:
    f = config.basic_flow() if initial is None else initial
    if f.geom != config.geom:
        raise ValidationError("initial field geometry does not match the configuration")
    f = f.resized(config.mx_max, config.c_max, truncate=True).enforce_reality()
    return SimState(t, f, config.phys)


def step(config: SimConfig, state: SimState, n: int = 1) -> SimState:
    """Advance ``n`` ETDRK2 steps of size ``config.dt_effective``."""
    integ = _Integrator(config)
    a = state.field.resized(config.mx_max, config.c_max, truncate=True).coeff
    t = state.t
    for _ in range(n):
        a = integ.step(a)
        t += integ.dt
        _check(a, t)
    return SimState(t, SpectralField(config.geom, a), config.phys, steps=state.steps + n)


def integrate(config: SimConfig, initial: SpectralField | SimState | None = None, t_end: float | None = None,
              every: float | None = None, callback=None) -> SimState:
    """March to ``t_end``, calling ``callback(state)`` every ``every`` time units (and at the end)."""
    state = initial if isinstance(initial, SimState) else initial_state(config, initial)
    integ = _Integrator(config)
    t_end = config.t_end if t_end is None else t_end
    every = config.snapshot_every if every is None else every
    a = state.field.coeff
    t, k = state.t, state.steps
    n_total = max(int(round((t_end - t) / integ.dt)), 0)
    per = max(int(round(every / integ.dt)), 1)
    for i in range(1, n_total + 1):
        a = integ.step(a)
        t = state.t + i * integ.dt
        _check(a, t)
        if callback is not None and (i % per == 0 or i == n_total):
            callback(SimState(t, SpectralField(config.geom, a), config.phys, _residual(integ, a), k + i))
    return SimState(t, SpectralField(config.geom, a), config.phys, _residual(integ, a), k + n_total)


def run_to_steady(config: SimConfig, initial: SpectralField | SimState | None = None, callback=None):
    """March until the residual |rhs|/|psi| stays below steady_tol for 10 snapshots.

    Returns (state, converged).  The run stops at ``config.t_end`` otherwise.
    """
    state = initial if isinstance(initial, SimState) else initial_state(config, initial)
    integ = _Integrator(config)
    a = state.field.coeff
    per = max(int(round(config.snapshot_every / integ.dt)), 1)
    n_total = max(int(round((config.t_end - state.t) / integ.dt)), 0)
    streak = 0
    res = _residual(integ, a)
    i = 0
    while i < n_total:
        n = min(per, n_total - i)
        for _ in range(n):
            a = integ.step(a)
        i += n
        t = state.t + i * integ.dt
        _check(a, t)
        res = _residual(integ, a)
        snap = SimState(t, SpectralField(config.geom, a), config.phys, res, state.steps + i)
        if callback is not None:
            callback(snap)
        streak = streak + 1 if res < config.steady_tol else 0
        if streak >= STEADY_WINDOW:
            return snap, True
    return SimState(state.t + i * integ.dt, SpectralField(config.geom, a), config.phys, res, state.steps + i), False


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class EnergyBalance:
    lhs: float  # sum over beta < 1 of |a|^2 (beta + lam) beta (1 - beta)
    rhs: float  # sum over beta > 1 of |a|^2 (beta + lam) beta (beta - 1)
    imbalance: float  # |lhs - rhs| / max(lhs, rhs), 0 when both vanish
    rate: float  # d/dt sum beta (beta - 1) |a|^2 implied by the balance

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.imbalance))


def steady_energy_balance(state: SimState) -> EnergyBalance:
    """Production by the long modes against dissipation by the short ones.

    For any trajectory d/dt sum beta(beta-1)|a|^2 = (2/R)(lhs - rhs); at a
    steady state the two sums agree.
    """
    f = state.field
    b = beta_grid(f.geom, f.mx_max, f.c_max)
    lam = state.phys.lam
    e = np.abs(f.coeff) ** 2 * (b + lam) * b * (b - 1)
    lhs = float(-np.sum(e[b < 1]))
    rhs_ = float(np.sum(e[b > 1]))
    top = max(lhs, rhs_)
    imb = abs(lhs - rhs_) / top if top > 0 else 0.0
    return EnergyBalance(lhs, rhs_, imb, 2.0 / state.phys.reynolds * (lhs - rhs_))


def weighted_energy(f: SpectralField) -> float:
    """sum beta (beta - 1) |a|^2, the quantity driven by the balance above."""
    b = beta_grid(f.geom, f.mx_max, f.c_max)
    return float(np.sum(b * (b - 1) * np.abs(f.coeff) ** 2))


def block_energies(f: SpectralField) -> dict[int, float]:
    """Kinetic energy per |m| (both signs combined)."""
    w = (2 * math.pi / f.geom.kx) * (f.geom.n_walls * math.pi)
    e = 0.5 * w * beta_grid(f.geom, f.mx_max, f.c_max) * np.abs(f.coeff) ** 2
    M = f.mx_max
    return {m: float(e[M + m].sum() + (e[M - m].sum() if m else 0.0)) for m in range(M + 1)}


def optimal_shift(f: SpectralField, g: SpectralField) -> tuple[float, float]:
    """(dx, distance): the x-shift minimising |f(. - dx) - g| and that normalised distance.

    The distance is divided by max(|f|, |g|).
    """
    a, b = f._aligned(g)
    M = (a.shape[0] - 1) // 2
    m = np.arange(-M, M + 1)
    cross = np.sum(a * np.conj(b), axis=1)  # per-harmonic overlap

    def neg_overlap(th):
        return -float(np.real(np.sum(cross * np.exp(-1j * m * th))))

    grid = np.linspace(0, 2 * math.pi, 2048, endpoint=False)
    vals = [neg_overlap(th) for th in grid]
    i = int(np.argmin(vals))
    h = grid[1] - grid[0]
    res = minimize_scalar(neg_overlap, bounds=(grid[i] - h, grid[i] + h), method="bounded",
                          options={"xatol": 1e-12})
    th = res.x
    for _ in range(3):  # Newton on the derivative; values alone stall near sqrt(eps)
        w = cross * np.exp(-1j * m * th)
        d1, d2 = np.real(np.sum(-1j * m * w)), np.real(np.sum(-(m * m) * w))
        if d2 >= 0 or not math.isfinite(d1 / d2) or abs(d1 / d2) > h:
            break
        th -= d1 / d2
    dx = (th % (2 * math.pi)) / f.geom.kx
    return dx, normalized_distance(f.shifted(dx), g)


def normalized_distance(f: SpectralField, g: SpectralField) -> float:
    top = max(f.norm(), g.norm())
    return (f - g).norm() / top if top > 0 else 0.0


def random_perturbation(config: SimConfig, scale: float, seed: int, c_limit: int | None = None) -> SpectralField:
    """Real random field with O(scale) coefficients on c <= c_limit (default 4N)."""
    rng = np.random.default_rng(seed)
    c_limit = 2 * config.geom.denom if c_limit is None else c_limit
    shape = (2 * config.mx_max + 1, config.c_max)
    a = np.zeros(shape, dtype=complex)
    a[:, :c_limit] = rng.standard_normal((shape[0], c_limit)) + 1j * rng.standard_normal((shape[0], c_limit))
    return SpectralField(config.geom, scale * a).enforce_reality()


@dataclass(frozen=True)
class SensitivityReport:
    times: np.ndarray
    distances: dict  # (i, j) -> normalised distances over time (no shift)
    shifted_end: dict  # (i, j) -> (dx, distance after the optimal shift) at the end
    spectra: list  # per run: block energies {|m|: E} of the end state
    end_fields: list
    errors: list  # per run: None or the blow-up message

    @property
    def max_distance(self) -> float:
        vals = [np.nanmax(v) for v in self.distances.values() if len(v)]
        return float(max(vals)) if vals else math.nan

    @property
    def max_shifted_end(self) -> float:
        vals = [d for _, d in self.shifted_end.values()]
        return float(max(vals)) if vals else math.nan


def sensitivity_run(config: SimConfig, n_runs: int, perturb_scale: float, every: float | None = None,
                    initial_base: SpectralField | None = None) -> SensitivityReport:
    """Trajectories from seeded random perturbations of the basic flow.

    Run r uses seed ``config.seed + r``.  Blow-ups are recorded and the run
    is excluded from the comparisons.
    """
    if n_runs < 2:
        raise ValidationError("n_runs must be >= 2")
    every = config.snapshot_every if every is None else every
    base = config.basic_flow() if initial_base is None else initial_base
    trajs, ends, errors = [], [], []
    times = None
    for r in range(n_runs):
        snaps = []
        init = base + random_perturbation(config, perturb_scale, config.seed + r)
        try:
            integrate(config, init, every=every, callback=lambda s: snaps.append(s))
            errors.append(None)
        except BlowUpError as exc:
            errors.append(str(exc))
        trajs.append(snaps)
        ends.append(snaps[-1].field if snaps and errors[-1] is None else None)
        if times is None and errors[-1] is None:
            times = np.array([s.t for s in snaps])
    times = np.array([]) if times is None else times
    dist, shifted = {}, {}
    for i, j in combinations(range(n_runs), 2):
        if errors[i] is not None or errors[j] is not None:
            continue
        dist[i, j] = np.array([normalized_distance(p.field, q.field) for p, q in zip(trajs[i], trajs[j])])
        shifted[i, j] = optimal_shift(ends[i], ends[j])
    spectra = [block_energies(e) if e is not None else None for e in ends]
    return SensitivityReport(times, dist, shifted, spectra, ends, errors)


# ---------------------------------------------------------------------------
# linear-nonlinear cross-checks


def growth_rate_dns(config: SimConfig, perturbation: SpectralField, t_skip: float, t_window: float,
                    samples: int = 21) -> float:
    """Exponential rate of |psi - psi_0| fitted over [t_skip, t_skip + t_window]."""
    psi0 = config.basic_flow()
    state = initial_state(config, psi0 + perturbation)
    if t_skip > 0:
        state = integrate(config, state, t_end=state.t + t_skip, every=t_skip)
    ts, logs = [], []
    dt_s = t_window / (samples - 1)
    t0 = state.t

    def rec(s):
        ts.append(s.t - t0)
        logs.append(math.log((s.field - psi0).norm()))

    rec(state)
    integrate(config, state, t_end=t0 + t_window, every=dt_s, callback=rec)
    slope = np.polyfit(np.array(ts), np.array(logs), 1)[0]
    return float(slope)


def dynamic_threshold(config: SimConfig, r_lo: float, r_hi: float, perturbation: SpectralField,
                      t_skip: float, t_window: float, rel_tol: float = 2e-3, max_iter: int = 20):
    """Bisect on R between decay and growth of a small perturbation of psi_0.

    Returns (r_lo, r_hi) bracketing the dynamic threshold.
    """

    def grows(r):
        cfg = config.with_(phys=config.phys.with_reynolds(r))
        return growth_rate_dns(cfg, perturbation, t_skip, t_window, samples=5) > 0

    if grows(r_lo) or not grows(r_hi):
        raise ValidationError(f"[{r_lo}, {r_hi}] does not bracket the decay/growth threshold")
    for _ in range(max_iter):
        if r_hi - r_lo <= rel_tol * r_lo:
            break
        mid = 0.5 * (r_lo + r_hi)
        if grows(mid):
            r_hi = mid
        else:
            r_lo = mid
    return r_lo, r_hi


def dns_amplitude(f: SpectralField, psi_star_normalized: SpectralField, psi0: SpectralField) -> float:
    """|X| = |<Lap(psi - psi_0), psi*>| with the conjugate normalised so <Lap psi, psi*> = 2."""
    return abs(inner(laplacian(f - psi0), psi_star_normalized))


@dataclass(frozen=True)
class DriftFit:
    speed: float  # U in psi_t ~ -U psi_x
    residual: float  # |rhs| / |psi|
    comoving_residual: float  # |rhs + U psi_x| / |psi|


def drift_speed(phys: PhysicalParams, geom: GeometryParams, f: SpectralField) -> DriftFit:
    """Least-squares streamwise drift of f: the part of rhs explained by a uniform translation.

    Secondary states need not be exactly steady because the equations are not
    invariant under x -> -x; a relative equilibrium drifts at constant speed U.
    """
    r = rhs(phys, geom, f)
    m = np.arange(-f.mx_max, f.mx_max + 1)[:, None]
    fx = SpectralField(geom, 1j * m * geom.kx * f.coeff)
    den = inner(fx, fx).real
    speed = -inner(r, fx).real / den if den > 0 else 0.0
    n = f.norm()
    return DriftFit(float(speed), r.norm() / n, (r + fx * speed).norm() / n)
