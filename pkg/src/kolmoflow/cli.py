"""Command-line interface: ``python3 -m kolmoflow <subcommand> [options]``.

Configuration comes from a flat ``key = value`` file (``--config``) with
``#`` comments; command-line flags override file values.  Recognised keys:

  lambda, reynolds, kx, walls, jmode, mx_max, c_max, dt, t_end, seed, theta,
  format, r_grid, kx_grid, order, n_runs, perturb_scale, steady_tol,
  snapshot_every, nx, ny, input, out

Grids are comma lists ``a,b,c`` or ranges ``start:stop:count`` (inclusive).
Exit codes: 0 success, 2 invalid input, 3 numerical failure.  When any row
of a sweep fails the output is written with a ``.partial`` suffix.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import bifurcation, dynamics, linstab, spectral
from .domain import GeometryParams, PhysicalParams, require_admissible
from .errors import KolmoError, NoBranchError, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

KEYS = {
    "lambda": float,
    "reynolds": float,
    "kx": float,
    "walls": int,
    "jmode": int,
    "mx_max": int,
    "c_max": int,
    "dt": float,
    "t_end": float,
    "seed": int,
    "theta": float,
    "format": str,
    "r_grid": str,
    "kx_grid": str,
    "order": int,
    "n_runs": int,
    "perturb_scale": float,
    "steady_tol": float,
    "snapshot_every": float,
    "nx": int,
    "ny": int,
    "input": str,
    "out": str,
}

DEFAULTS = {
    "lambda": 20.0,
    "kx": 0.7,
    "walls": 4,
    "jmode": 1,
    "mx_max": 2,
    "dt": 0.5,
    "t_end": 1000.0,
    "seed": 0,
    "theta": 0.0,
    "format": "csv",
    "order": 1,
    "n_runs": 2,
    "perturb_scale": 1e-3,
    "steady_tol": 1e-10,
    "snapshot_every": 10.0,
    "out": ".",
}


def fmt(x) -> str:
    """17 significant digits: round-trip exact for doubles."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def parse_config_file(path: str) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in KEYS:
                raise ValidationError(f"{path}:{lineno}: unknown key '{key}'")
            out[key] = _coerce(key, val)
    return out


def _coerce(key, val):
    try:
        return KEYS[key](val)
    except ValueError as exc:
        raise ValidationError(f"bad value for {key}: {val!r}") from exc


def parse_grid(text: str | None, name: str) -> list[float]:
    if text is None:
        raise ValidationError(f"{name} is required")
    text = text.strip()
    if not text:
        return []
    try:
        if ":" in text:
            a, b, n = text.split(":")
            n = int(n)
            if n < 1:
                raise ValidationError(f"{name}: count must be >= 1")
            return [float(v) for v in np.linspace(float(a), float(b), n)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"cannot parse {name} '{text}'") from exc


# ---------------------------------------------------------------------------
# output helpers


class Output:
    def __init__(self, outdir: str, fmt_: str):
        if fmt_ not in ("csv", "json"):
            raise ValidationError(f"format must be csv or json, got {fmt_!r}")
        self.dir = outdir
        self.format = fmt_
        os.makedirs(outdir, exist_ok=True)
        self.written = []

    def _path(self, name, partial):
        return os.path.join(self.dir, name + (".partial" if partial else ""))

    def table(self, stem: str, header: list[str], rows, partial: bool = False) -> str:
        if self.format == "json":
            data = [dict(zip(header, (_jsonable(v) for v in r))) for r in rows]
            return self.json(stem + ".json", data, partial)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
        return self._write(stem + ".csv", buf.getvalue(), partial)

    def json(self, name: str, data, partial: bool = False) -> str:
        return self._write(name, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", partial)

    def _write(self, name, text, partial):
        path = self._path(name, partial)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.written.append(path)
        return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


# ---------------------------------------------------------------------------
# parameter assembly


def _params(cfg, need_reynolds=False):
    geom = GeometryParams(cfg["kx"], cfg["walls"], cfg["jmode"])
    R = cfg.get("reynolds")
    if R is None and need_reynolds:
        raise ValidationError("reynolds is required for this subcommand")
    return geom, (PhysicalParams(cfg["lambda"], R) if R is not None else None)


def _sim_config(cfg, phys, geom):
    return dynamics.SimConfig(
        phys,
        geom,
        mx_max=cfg["mx_max"],
        c_max=cfg.get("c_max"),
        dt=cfg["dt"],
        t_end=cfg["t_end"],
        steady_tol=cfg["steady_tol"],
        snapshot_every=cfg["snapshot_every"],
        seed=cfg["seed"],
    )


def _grid_shape(cfg, geom):
    nx = cfg.get("nx") or 241
    ny = cfg.get("ny") or (geom.denom * 30 + 1)
    return nx, ny


def _write_field(out, stem, f, cfg):
    nx, ny = _grid_shape(cfg, f.geom)
    x, y, v = spectral.sample_grid(f, nx, ny)
    if np.iscomplexobj(v):
        v = v.real
    rows = [(x[i], y[j], v[j, i]) for j in range(len(y)) for i in range(len(x))]
    return out.table(stem, ["x", "y", "psi"], rows)


# ---------------------------------------------------------------------------
# subcommands; each returns an exit code


def cmd_sigma_curve(cfg, out):
    geom, _ = _params(cfg)
    grid = parse_grid(cfg.get("r_grid"), "r_grid")
    require_admissible(geom)
    rows, failed = [], False
    for R in grid:
        try:
            sol = linstab.sigma_of_R(PhysicalParams(cfg["lambda"], R), geom)
            res = linstab.dispersion_residual(PhysicalParams(cfg["lambda"], R), geom, sol.sigma)
            rows.append((R, sol.sigma, res))
        except KolmoError as exc:
            print(f"R = {R}: {exc}", file=sys.stderr)
            rows.append((R, math.nan, math.nan))
            failed = True
    out.table("sigma_curve", ["R", "sigma", "residual"], rows, partial=failed)
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_neutral_curve(cfg, out):
    grid = sorted(parse_grid(cfg.get("kx_grid"), "kx_grid"))
    curve = linstab.neutral_curve(cfg["lambda"], cfg["walls"], cfg["jmode"], grid)
    failed = any(p.error is not None for p in curve.points)
    for p in curve.points:
        if p.error is not None:
            print(f"kx = {p.kx}: {p.error}", file=sys.stderr)
    out.table("neutral", ["k_x", "R_c"], [(p.kx, p.reynolds_c) for p in curve.points], partial=failed)
    best = curve.argmin
    side = {
        "lambda": cfg["lambda"],
        "walls": cfg["walls"],
        "jmode": cfg["jmode"],
        "minimum": None if best is None else {"k_x": best.kx, "R_c": best.reynolds_c},
    }
    out.json("neutral.json", side, partial=failed)
    return EXIT_NUMERICAL if failed else EXIT_OK


def _reynolds_or_critical(cfg, geom):
    R = cfg.get("reynolds")
    return linstab.critical_reynolds(cfg["lambda"], geom) if R is None else R


def cmd_eigenfunction(cfg, out):
    geom, _ = _params(cfg)
    require_admissible(geom)
    phys = PhysicalParams(cfg["lambda"], _reynolds_or_critical(cfg, geom))
    sol = linstab.sigma_of_R(phys, geom)
    out.table("eigen", ["n", "phi", "phi_star"], [(str(int(n)), p, q) for n, p, q in zip(sol.n, sol.phi, sol.phi_star)])
    fields = spectral.eigenfields(phys, geom, sol)
    _write_field(out, "eigen_field", fields.psi1, cfg)
    return EXIT_OK


def cmd_landau(cfg, out):
    geom, _ = _params(cfg)
    model = bifurcation.BifurcationModel(cfg["lambda"], geom)
    R = cfg.get("reynolds") or model.reynolds_c
    mu = model.mu(R)
    try:
        eps = model.amplitude(R)
    except NoBranchError as exc:
        print(str(exc), file=sys.stderr)
        eps = math.nan
    L = model.landau
    data = {
        "R_c": model.reynolds_c,
        "a": L.a,
        "b": L.b,
        "a_plus_b": L.a_plus_b,
        "supercritical": L.supercritical,
        "R": R,
        "mu_at_R": mu,
        "epsilon_at_R": eps,
        "branch_exists": not math.isnan(eps),
    }
    out.json("landau.json", data)
    return EXIT_OK


def cmd_secondary(cfg, out):
    geom, phys = _params(cfg, need_reynolds=True)
    spec = bifurcation.secondary_flow(phys, geom, cfg["theta"], cfg["order"])
    out.json(
        "secondary.json",
        {"R": spec.reynolds, "R_c": spec.reynolds_c, "mu": spec.mu, "epsilon": spec.amplitude,
         "theta": spec.theta, "order": spec.order, "s1": spec.s1, "s2": spec.s2},
    )
    _write_field(out, "field", spec.field, cfg)
    np.savez(os.path.join(out.dir, "secondary_state.npz"), coeff=spec.field.coeff,
             kx=geom.kx, walls=geom.n_walls, jmode=geom.j_mode)
    return EXIT_OK


def _timeseries_row(state, psi0):
    f = state.field
    e = dynamics.block_energies(f)
    ep = sum(dynamics.block_energies(f - psi0).values())
    amp = f.only_blocks([-1, 1]).norm()
    return (state.t, sum(e.values()), ep, amp, state.residual)


def cmd_simulate(cfg, out):
    geom, phys = _params(cfg, need_reynolds=True)
    sc = _sim_config(cfg, phys, geom)
    psi0 = sc.basic_flow()
    if cfg.get("input"):
        init = load_state(cfg["input"], geom)
    else:
        init = psi0 + dynamics.random_perturbation(sc, cfg["perturb_scale"], sc.seed)
    rows = []
    state0 = dynamics.initial_state(sc, init)
    rows.append(_timeseries_row(dynamics.SimState(0.0, state0.field, phys, math.nan), psi0))
    failed = False
    try:
        final = dynamics.integrate(sc, state0, callback=lambda s: rows.append(_timeseries_row(s, psi0)))
    except KolmoError as exc:
        print(str(exc), file=sys.stderr)
        failed = True
        final = None
    out.table("timeseries", ["t", "E_total", "E_pert", "amp_m1", "residual"], rows, partial=failed)
    if final is not None:
        np.savez(os.path.join(out.dir, "final_state.npz"), coeff=final.field.coeff, t=final.t,
                 kx=geom.kx, walls=geom.n_walls, jmode=geom.j_mode)
    return EXIT_NUMERICAL if failed else EXIT_OK


def load_state(path: str, geom: GeometryParams) -> spectral.SpectralField:
    with np.load(path) as z:
        saved = GeometryParams(float(z["kx"]), int(z["walls"]), int(z["jmode"]))
        if saved != geom:
            raise ValidationError(f"{path} was written for {saved}, not {geom}")
        return spectral.SpectralField(geom, z["coeff"])


def cmd_field(cfg, out):
    geom, _ = _params(cfg)
    if cfg.get("input"):
        f = load_state(cfg["input"], geom)
    else:
        f = spectral.basic_flow(PhysicalParams(cfg["lambda"], cfg.get("reynolds") or 1.0), geom)
    _write_field(out, "field", f, cfg)
    return EXIT_OK


def cmd_sensitivity(cfg, out):
    geom, phys = _params(cfg, need_reynolds=True)
    sc = _sim_config(cfg, phys, geom)
    rep = dynamics.sensitivity_run(sc, cfg["n_runs"], cfg["perturb_scale"])
    rows = []
    for (i, j), d in sorted(rep.distances.items()):
        for t, v in zip(rep.times, d):
            rows.append((t, f"{i}-{j}", v))
    failed = any(e is not None for e in rep.errors)
    out.table("sensitivity", ["t", "pair", "distance"], rows, partial=failed)
    summary = {
        "R": phys.reynolds,
        "runs": cfg["n_runs"],
        "errors": rep.errors,
        "max_distance": rep.max_distance,
        "end_shifted": {f"{i}-{j}": {"dx": dx, "distance": d} for (i, j), (dx, d) in sorted(rep.shifted_end.items())},
        "spectra": rep.spectra,
    }
    out.json("sensitivity.json", summary, partial=failed)
    return EXIT_NUMERICAL if failed else EXIT_OK


COMMANDS = {
    "sigma-curve": (cmd_sigma_curve, "growth rate sigma(R) over r_grid"),
    "neutral-curve": (cmd_neutral_curve, "critical Reynolds number over kx_grid"),
    "eigenfunction": (cmd_eigenfunction, "eigen and conjugate coefficients plus the psi1 field"),
    "landau": (cmd_landau, "Landau coefficients and the predicted amplitude at R"),
    "secondary": (cmd_secondary, "secondary state on the bifurcating circle at phase theta"),
    "simulate": (cmd_simulate, "time integration from a seeded perturbation of psi_0"),
    "field": (cmd_field, "sample a saved state (or psi_0) on the plotting grid"),
    "sensitivity": (cmd_sensitivity, "pairwise divergence of seeded trajectories"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kolmoflow", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        s = sub.add_parser(name, help=helptext, description=helptext)
        s.add_argument("--config", help="flat key = value file")
        s.add_argument("--out", help="output directory (default .)")
        s.add_argument("--lambda", dest="lambda_", type=float, help="friction lambda (default 20)")
        s.add_argument("--reynolds", type=float, help="Reynolds number (default R_c where optional)")
        s.add_argument("--kx", type=float, help="streamwise wavenumber (default 0.7)")
        s.add_argument("--walls", type=int, help="N, duct height 2 N pi (default 4)")
        s.add_argument("--jmode", type=int, help="wall mode j in 1..N-1 (default 1)")
        s.add_argument("--mx-max", type=int, help="streamwise truncation |m| <= mx_max (default 2)")
        s.add_argument("--c-max", type=int, help="wall-normal truncation (default 64 N)")
        s.add_argument("--dt", type=float, help="time step cap (default 0.5)")
        s.add_argument("--t-end", type=float, help="integration horizon (default 1000)")
        s.add_argument("--seed", type=int, help="random seed (default 0)")
        s.add_argument("--theta", type=float, help="phase on the circle of states (default 0)")
        s.add_argument("--format", choices=["csv", "json"], help="tabular output format (default csv)")
        s.add_argument("--r-grid", help="R values: a,b,c or start:stop:count")
        s.add_argument("--kx-grid", help="kx values: a,b,c or start:stop:count")
        s.add_argument("--order", type=int, choices=[1, 2], help="secondary-state order (default 1)")
        s.add_argument("--n-runs", type=int, help="sensitivity runs (default 2)")
        s.add_argument("--perturb-scale", type=float, help="random perturbation size (default 1e-3)")
        s.add_argument("--steady-tol", type=float, help="steady residual threshold (default 1e-10)")
        s.add_argument("--snapshot-every", type=float, help="time between snapshots (default 10)")
        s.add_argument("--nx", type=int, help="field grid points in x (default 241)")
        s.add_argument("--ny", type=int, help="field grid points in y (default 60 N + 1)")
        s.add_argument("--input", help="state file (.npz) written by simulate or secondary")
    return p


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(parse_config_file(args.config))
    for key in KEYS:
        attr = "lambda_" if key == "lambda" else key
        val = getattr(args, attr, None)
        if val is not None:
            cfg[key] = val
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Output(cfg["out"], cfg["format"])
        return COMMANDS[args.command][0](cfg, out)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except KolmoError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
