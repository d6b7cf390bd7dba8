"""Batch command-line front end.

Subcommands: mu, lattice, delta-n (closed-form printouts) and spectrum, sweep,
crossings, periodicity, source (experiments writing CSV/plot files).  Options
resolve as defaults < config file (`key = value` lines, `#` comments) < flags;
every experiment writes the fully resolved configuration back to
`<out>/run.meta`, which is itself a valid config file.  Exit codes: 0 success,
2 validation failure, 3 solver failure (partial outputs are kept).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np
import scipy

from . import __version__
from .errors import SignflipError, SolverError, SweepError
from .material import MaterialContrast, compute_mu, delta_n, lattice, period_lndelta
from .mesh import CanonicalMeshParams
from . import experiments as xp

_ENV_THREADS = "SIGNFLIP_THREADS"

_DEFAULTS = {
    "sigma_plus": 1.0,
    "sigma_minus": -1.0 + 1e-4,
    "delta": 0.5,
    "delta_min": math.exp(-2.5),
    "delta_max": math.exp(-0.1),
    "grid_points": 400,
    "k": 10,
    "n_radial": 24,
    "n_angular_minus": 8,
    "tol": 1e-9,
    "seed": 0,
    "threads": None,  # env var, then 1
    "out": "signflip-out",
    "n_max": 3,
    "window": 2.0,
    "bracket_halfwidth": 0.4,
    "f_value": 100.0,
    "f_xcut": -0.5,
}

_INT_KEYS = {"grid_points", "k", "n_radial", "n_angular_minus", "seed", "threads", "n_max"}
_STR_KEYS = {"out"}

_COMMAND_KEYS = {
    "mu": ["sigma_plus", "sigma_minus", "out"],
    "lattice": ["sigma_plus", "sigma_minus", "window", "out"],
    "delta-n": ["sigma_plus", "sigma_minus", "n_max", "out"],
    "spectrum": ["sigma_plus", "sigma_minus", "delta", "n_radial", "n_angular_minus",
                 "k", "tol", "seed", "threads", "out"],
    "sweep": ["sigma_plus", "sigma_minus", "delta_min", "delta_max", "grid_points",
              "n_radial", "n_angular_minus", "k", "tol", "seed", "threads", "out"],
    "crossings": ["sigma_plus", "sigma_minus", "delta_min", "delta_max", "grid_points",
                  "n_radial", "n_angular_minus", "n_max", "bracket_halfwidth",
                  "tol", "seed", "threads", "out"],
    "periodicity": ["sigma_plus", "sigma_minus", "delta_min", "delta_max", "grid_points",
                    "n_radial", "n_angular_minus", "k", "tol", "seed", "threads", "out"],
    "source": ["sigma_plus", "sigma_minus", "delta_min", "delta_max", "grid_points",
               "n_radial", "n_angular_minus", "f_value", "f_xcut",
               "tol", "seed", "threads", "out"],
}


def _parse_config_file(path: str) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = val
    return values


def _coerce(key: str, raw):
    if raw is None:
        return None
    if key in _STR_KEYS:
        return str(raw)
    if key in _INT_KEYS:
        return int(str(raw))
    return float(str(raw))


def _resolve(cmd: str, args: argparse.Namespace) -> dict:
    keys = _COMMAND_KEYS[cmd]
    cfg = {k: _DEFAULTS[k] for k in keys}
    if getattr(args, "config", None):
        file_vals = _parse_config_file(args.config)
        unknown = set(file_vals) - set(keys)
        if unknown:
            raise ValueError(f"config keys not used by '{cmd}': {sorted(unknown)}")
        for k, v in file_vals.items():
            cfg[k] = _coerce(k, v)
    for k in keys:
        flag_val = getattr(args, k, None)
        if flag_val is not None:
            cfg[k] = _coerce(k, flag_val)
    if "threads" in keys and cfg.get("threads") is None:
        cfg["threads"] = int(os.environ.get(_ENV_THREADS, "1"))
    return cfg


def _contrast(cfg: dict) -> MaterialContrast:
    return MaterialContrast(sigma_plus=cfg["sigma_plus"], sigma_minus=cfg["sigma_minus"])


def _write_meta(cfg: dict, cmd: str, t0: float) -> None:
    path = os.path.join(cfg["out"], "run.meta")
    with open(path, "w") as fh:
        fh.write("# signflip run metadata; valid as a --config file for the same command\n")
        fh.write(f"# command: {cmd}\n")
        fh.write(f"# versions: signflip {__version__}, python {sys.version.split()[0]}, "
                 f"numpy {np.__version__}, scipy {scipy.__version__}\n")
        fh.write(f"# wall_time_s: {time.time() - t0:.3f}\n")
        for k, v in cfg.items():
            if isinstance(v, float):
                fh.write(f"{k} = {v:.17g}\n")
            else:
                fh.write(f"{k} = {v}\n")


def _ensure_out(cfg: dict) -> None:
    try:
        os.makedirs(cfg["out"], exist_ok=True)
        probe = os.path.join(cfg["out"], ".write_probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise ValueError(f"output directory {cfg['out']!r} is not writable: {exc}") from exc


def _grid(cfg: dict) -> list[float]:
    return xp.log_uniform_grid(cfg["delta_min"], cfg["delta_max"], cfg["grid_points"])


def _plan(cfg: dict, grid) -> xp.SweepPlan:
    template = CanonicalMeshParams(delta=grid[0], n_radial=cfg["n_radial"],
                                   n_angular_minus=cfg["n_angular_minus"])
    return xp.SweepPlan(
        contrast=_contrast(cfg), delta_grid=grid, mesh_template=template,
        k=cfg.get("k", 10), tol=cfg["tol"], seed=cfg["seed"],
        workers=cfg.get("threads", 1),
        bracket_halfwidth=cfg.get("bracket_halfwidth", 0.4),
    )


def _sig(x: float) -> str:
    return f"{x:.15g}"


def _cmd_mu(cfg: dict) -> int:
    mu = compute_mu(_contrast(cfg))
    print(f"kappa = {_sig(cfg['sigma_minus'] / cfg['sigma_plus'])}")
    print(f"mu = {_sig(mu.real)} + {_sig(mu.imag)}i")
    if _contrast(cfg).is_critical:
        print(f"period_lndelta = {_sig(period_lndelta(_contrast(cfg)))}")
    return 0


def _cmd_lattice(cfg: dict) -> int:
    pts = lattice(_contrast(cfg), cfg["window"])
    for z in pts:
        print(f"{_sig(z.real)} {_sig(z.imag)}")
    if cfg.get("out"):
        _ensure_out(cfg)
        xp.write_lattice_csv(os.path.join(cfg["out"], "lattice.csv"), pts)
    return 0


def _cmd_delta_n(cfg: dict) -> int:
    contrast = _contrast(cfg)
    values = [(n, delta_n(contrast, n)) for n in range(1, cfg["n_max"] + 1)]
    for n, d in values:
        print(f"delta^{n} = {_sig(d)}")
    if cfg.get("out"):
        _ensure_out(cfg)
        with open(os.path.join(cfg["out"], "delta_n.csv"), "w") as fh:
            fh.write("n,delta_n\n")
            for n, d in values:
                fh.write(f"{n},{d:.17g}\n")
    return 0


def _cmd_spectrum(cfg: dict, cmd: str, t0: float) -> int:
    _ensure_out(cfg)
    plan = _plan(cfg, [cfg["delta"]])
    try:
        records = xp.run_sweep(plan)
    except SweepError as exc:
        xp.write_spectrum_csv(os.path.join(cfg["out"], "spectrum.csv"), exc.partial)
        _write_meta(cfg, cmd, t0)
        raise
    xp.write_spectrum_csv(os.path.join(cfg["out"], "spectrum.csv"), records)
    _write_meta(cfg, cmd, t0)
    return 0


def _cmd_sweep(cfg: dict, cmd: str, t0: float) -> int:
    _ensure_out(cfg)
    plan = _plan(cfg, _grid(cfg))
    try:
        records = xp.run_sweep(plan)
    except SweepError as exc:
        xp.write_spectrum_csv(os.path.join(cfg["out"], "spectrum.csv"), exc.partial)
        _write_meta(cfg, cmd, t0)
        raise
    xp.write_spectrum_csv(os.path.join(cfg["out"], "spectrum.csv"), records)
    xp.write_spectrum_plots(cfg["out"], records)
    _write_meta(cfg, cmd, t0)
    return 0


def _cmd_crossings(cfg: dict, cmd: str, t0: float) -> int:
    _ensure_out(cfg)
    plan = _plan(cfg, _grid(cfg))
    reports = xp.locate_crossings(plan, cfg["n_max"])
    xp.write_crossings_csv(os.path.join(cfg["out"], "crossings.csv"), reports)
    _write_meta(cfg, cmd, t0)
    for r in reports:
        state = "found" if r.found else "MISSING"
        print(f"n={r.n} predicted={_sig(r.delta_predicted)} "
              f"found={_sig(r.delta_found)} [{state}]")
    return 0


def _cmd_periodicity(cfg: dict, cmd: str, t0: float) -> int:
    _ensure_out(cfg)
    contrast = _contrast(cfg)
    base = xp.log_uniform_grid(cfg["delta_min"], cfg["delta_max"], cfg["grid_points"])
    grid = xp.periodicity_grid(contrast, base)
    plan = _plan(cfg, grid)
    try:
        records = xp.run_sweep(plan)
    except SweepError as exc:
        xp.write_spectrum_csv(os.path.join(cfg["out"], "spectrum.csv"), exc.partial)
        _write_meta(cfg, cmd, t0)
        raise
    mu = compute_mu(contrast).real
    report = xp.verify_periodicity(records, mu, j_range=(0, -1))
    xp.write_spectrum_csv(os.path.join(cfg["out"], "spectrum.csv"), records)
    xp.write_periodicity_csv(os.path.join(cfg["out"], "periodicity.csv"), report)
    xp.write_spectrum_plots(cfg["out"], records)
    _write_meta(cfg, cmd, t0)
    for j, d in sorted(report.defect_by_j.items()):
        print(f"branch j={j}: max one-period defect = {_sig(d)}")
    return 0


def _cmd_source(cfg: dict, cmd: str, t0: float) -> int:
    _ensure_out(cfg)
    plan = _plan(cfg, _grid(cfg))
    points = xp.source_sweep(plan, value=cfg["f_value"], x_cut=cfg["f_xcut"])
    xp.write_source_csv(os.path.join(cfg["out"], "source.csv"), points)
    xp.write_source_plot(cfg["out"], points)
    _write_meta(cfg, cmd, t0)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signflip",
        description="Spectral laboratory for the sign-changing diffusion problem "
                    "on the rounded-corner half-annulus.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value config file; flags override it")
        for key in _COMMAND_KEYS[name]:
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, default=None,
                           help=f"{key} (default {_DEFAULTS[key]})")
        return p

    add("mu", "print the corner exponent and the ln-delta period")
    add("lattice", "print/export the exponent lattice inside a strip")
    add("delta-n", "print/export the injectivity-loss sequence delta^n")
    add("spectrum", "smallest-modulus eigenvalues at one delta")
    add("sweep", "spectrum records over a log-uniform delta grid")
    add("crossings", "bisect the zero crossings against the predicted delta^n")
    add("periodicity", "one-period defects of the eigenvalue branches")
    add("source", "energy norm of the source solution along the grid")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    cmd = args.command
    t0 = time.time()
    try:
        cfg = _resolve(cmd, args)
        if cmd == "mu":
            return _cmd_mu(cfg)
        if cmd == "lattice":
            return _cmd_lattice(cfg)
        if cmd == "delta-n":
            return _cmd_delta_n(cfg)
        if cmd == "spectrum":
            return _cmd_spectrum(cfg, cmd, t0)
        if cmd == "sweep":
            return _cmd_sweep(cfg, cmd, t0)
        if cmd == "crossings":
            return _cmd_crossings(cfg, cmd, t0)
        if cmd == "periodicity":
            return _cmd_periodicity(cfg, cmd, t0)
        if cmd == "source":
            return _cmd_source(cfg, cmd, t0)
        raise ValueError(f"unknown command {cmd}")
    except (SolverError, SweepError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
