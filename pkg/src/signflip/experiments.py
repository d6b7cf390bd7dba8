"""Delta sweeps and the derived diagnostics: spectrum traces, periodicity
defects, zero-crossing localization against the predicted delta^n, and the
source-problem norm sweep.

Every sweep rebuilds the canonical mesh with the same subdivision counts and
the radial grading re-anchored to the current delta, so the mesh family is
self-similar in ln r and the discrete spectra are comparable across delta.
Grids are processed in order (optionally by a process pool); output is
deterministic for a fixed plan.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import SingularSystemError, SolverError, SweepError
from .fem import assemble, h1_seminorm, load_piecewise_x
from .material import MaterialContrast, compute_mu, delta_n
from .mesh import CanonicalMeshParams, build_canonical
from .eig import SpectrumRecord, inertia, smallest_modulus, solve_source

__all__ = [
    "SweepPlan",
    "CrossingReport",
    "PairDefect",
    "PeriodicityReport",
    "SourcePoint",
    "log_uniform_grid",
    "periodicity_grid",
    "run_sweep",
    "verify_periodicity",
    "locate_crossings",
    "source_sweep",
    "branch_value",
    "write_spectrum_csv",
    "write_crossings_csv",
    "write_periodicity_csv",
    "write_source_csv",
    "write_spectrum_plots",
    "write_source_plot",
    "write_lattice_csv",
]

_FMT = "{:.17g}"


@dataclass
class SweepPlan:
    """Everything one delta sweep needs; the mesh counts stay fixed across it."""

    contrast: MaterialContrast
    delta_grid: list
    mesh_template: CanonicalMeshParams
    k: int = 10
    tol: float = 1e-9
    seed: int = 0
    workers: int = 1
    bracket_halfwidth: float = 0.4  # ln-delta half width of each crossing bracket

    def __post_init__(self):
        grid = [float(d) for d in self.delta_grid]
        if not grid:
            raise ValueError("delta grid is empty")
        if any(not (0.0 < d < 1.0) for d in grid):
            raise ValueError("delta grid must lie strictly inside (0, 1)")
        if any(b >= a for a, b in zip(grid, grid[1:])):
            raise ValueError("delta grid must be strictly decreasing")
        self.delta_grid = grid

    def mesh_params(self, delta: float) -> CanonicalMeshParams:
        return dataclasses.replace(self.mesh_template, delta=delta)


@dataclass
class CrossingReport:
    """Localized zero crossing of the smallest-modulus eigenvalue."""

    n: int
    delta_predicted: float
    delta_found: float
    error_lndelta: float
    found: bool = True


@dataclass
class PairDefect:
    j: int
    delta: float
    delta_shifted: float
    lam: float
    lam_shifted: float
    defect: float


@dataclass
class PeriodicityReport:
    pairs: list
    defect_by_j: dict
    mismatches: list  # (delta, delta_shifted, n_neg, n_pos, n_neg_shifted, n_pos_shifted)


@dataclass
class SourcePoint:
    delta: float
    h1_norm: float
    singular: bool


def log_uniform_grid(delta_min: float, delta_max: float, n: int) -> list[float]:
    """Strictly decreasing grid, uniform in ln delta."""
    if not (0.0 < delta_min < delta_max < 1.0):
        raise ValueError("need 0 < delta_min < delta_max < 1")
    if n < 1:
        raise ValueError("need at least one grid point")
    if n == 1:
        return [delta_max]
    lns = np.linspace(math.log(delta_max), math.log(delta_min), n)
    return [float(math.exp(v)) for v in lns]


def periodicity_grid(contrast: MaterialContrast, base_deltas: Sequence[float]) -> list[float]:
    """Grid holding every base delta together with its one-period partner
    delta * exp(-pi/mu), so periodicity can be tested pair by pair."""
    factor = math.exp(-math.pi / compute_mu(contrast).real)
    pts = set()
    for d in base_deltas:
        pts.add(float(d))
        pts.add(float(d) * factor)
    if any(not (0.0 < d < 1.0) for d in pts):
        raise ValueError("a shifted delta left (0, 1); shrink the base grid")
    return sorted(pts, reverse=True)


def _solve_at(plan: SweepPlan, delta: float) -> SpectrumRecord:
    mesh = build_canonical(plan.mesh_params(delta))
    system = assemble(mesh, plan.contrast)
    return smallest_modulus(system, plan.k, tol=plan.tol, delta=delta, seed=plan.seed)


def run_sweep(plan: SweepPlan) -> list[SpectrumRecord]:
    """One SpectrumRecord per grid delta, in grid order.

    A failing solve aborts the sweep but the records computed so far travel
    with the exception together with the offending delta.
    """
    records: list[SpectrumRecord] = []
    if plan.workers <= 1:
        for d in plan.delta_grid:
            try:
                records.append(_solve_at(plan, d))
            except SolverError as exc:
                raise SweepError(f"sweep failed at delta = {d:.6g}: {exc}", d, records) from exc
        return records
    with ProcessPoolExecutor(max_workers=plan.workers) as pool:
        futures = [pool.submit(_solve_at, plan, d) for d in plan.delta_grid]
        for d, fut in zip(plan.delta_grid, futures):
            try:
                records.append(fut.result())
            except SolverError as exc:
                for other in futures:
                    other.cancel()
                raise SweepError(f"sweep failed at delta = {d:.6g}: {exc}", d, records) from exc
    return records


def branch_value(record: SpectrumRecord, j: int) -> Optional[float]:
    """Eigenvalue branch j of a record: j >= 0 indexes the nonnegative values in
    ascending order, j < 0 the negative ones in descending order (j = -1 is the
    first negative, the one closest to zero).  None when the branch is absent."""
    neg = [v for v in record.eigenvalues if v < 0.0]
    pos = [v for v in record.eigenvalues if v >= 0.0]
    if j >= 0:
        return pos[j] if j < len(pos) else None
    jj = -j - 1
    neg_desc = neg[::-1]
    return neg_desc[jj] if jj < len(neg_desc) else None


def verify_periodicity(records: Sequence[SpectrumRecord], mu: float,
                       j_range: Sequence[int]) -> PeriodicityReport:
    """One-period defects |l_j(d) - l_j(d e^{-pi/mu})| / (1 + |l_j(d)|).

    Branches are paired by sorted index within each sign class; pairs whose
    sign counts differ are reported in `mismatches` rather than dropped.
    Raises ValueError when the records contain no one-period pairs.
    """
    factor = math.exp(-math.pi / mu)
    recs = sorted(records, key=lambda r: -r.delta)
    deltas = np.array([r.delta for r in recs])

    def find_partner(d: float) -> Optional[SpectrumRecord]:
        target = d * factor
        i = int(np.argmin(np.abs(deltas - target)))
        if abs(deltas[i] - target) <= 1e-12 * target:
            return recs[i]
        return None

    pairs: list[PairDefect] = []
    mismatches = []
    matched = 0
    for rec in recs:
        partner = find_partner(rec.delta)
        if partner is None:
            continue
        matched += 1
        if (rec.n_neg, rec.n_pos) != (partner.n_neg, partner.n_pos):
            mismatches.append((rec.delta, partner.delta, rec.n_neg, rec.n_pos,
                               partner.n_neg, partner.n_pos))
        for j in j_range:
            a = branch_value(rec, j)
            b = branch_value(partner, j)
            if a is None or b is None:
                mismatches.append((rec.delta, partner.delta, rec.n_neg, rec.n_pos,
                                   partner.n_neg, partner.n_pos))
                continue
            defect = abs(a - b) / (1.0 + abs(a))
            pairs.append(PairDefect(j, rec.delta, partner.delta, a, b, defect))
    if matched == 0:
        raise ValueError(
            "records contain no (delta, delta*exp(-pi/mu)) pairs; build the grid "
            "with periodicity_grid()")
    defect_by_j = {}
    for j in j_range:
        js = [p.defect for p in pairs if p.j == j]
        defect_by_j[j] = max(js) if js else math.nan
    return PeriodicityReport(pairs, defect_by_j, mismatches)


def _negative_count(plan: SweepPlan, delta: float) -> int:
    """Number of negative eigenvalues (inertia of A at shift 0) at this delta."""
    return inertia(assemble(build_canonical(plan.mesh_params(delta)), plan.contrast), 0.0)[0]


def locate_crossings(plan: SweepPlan, n_max: int,
                     count_fn: Optional[Callable[[float], int]] = None,
                     lnwidth: float = 1e-4) -> list[CrossingReport]:
    """Bisect (in ln delta) the zero crossing of the smallest-modulus eigenvalue.

    The crossing is the delta where one eigenvalue of the discrete family
    passes through zero, i.e. where the negative-eigenvalue count nu(0) jumps;
    the inertia at shift 0 is the arbiter of that event (the raw sign of the
    smallest-modulus value also flips at branch-identity switches away from
    the crossing, so it is not monotone over a bracket).  Critical contrasts
    get one bracket per predicted delta^n, n = 1..n_max, of half-width
    plan.bracket_halfwidth in ln delta; a bracket whose endpoint counts do not
    differ by exactly one is reported with found=False.  Non-critical
    contrasts have no predicted crossings; the plan grid is scanned and any
    (unexpected) count changes are reported with n = 0.
    """
    if count_fn is None:
        count_fn = lambda d: _negative_count(plan, d)

    if not plan.contrast.is_critical:
        reports = []
        prev_nu = None
        prev_d = None
        for d in plan.delta_grid:
            nu = count_fn(d)
            if prev_nu is not None and nu != prev_nu:
                mid = math.sqrt(prev_d * d)
                reports.append(CrossingReport(0, math.nan, mid, math.nan, True))
            prev_nu, prev_d = nu, d
        return reports

    reports = []
    for n in range(1, n_max + 1):
        dn = delta_n(plan.contrast, n)
        ln_pred = math.log(dn)
        hw = plan.bracket_halfwidth
        ln_hi = min(ln_pred + hw, math.log(0.995))
        ln_lo = ln_pred - hw
        c_hi = count_fn(math.exp(ln_hi))
        c_lo = count_fn(math.exp(ln_lo))
        if abs(c_lo - c_hi) != 1:
            reports.append(CrossingReport(n, dn, math.nan, math.nan, False))
            continue
        lo, hi = ln_lo, ln_hi
        while hi - lo > lnwidth:
            mid = 0.5 * (lo + hi)
            if count_fn(math.exp(mid)) == c_lo:
                lo = mid
            else:
                hi = mid
        ln_found = 0.5 * (lo + hi)
        reports.append(CrossingReport(n, dn, math.exp(ln_found),
                                      abs(ln_found - ln_pred), True))
    return reports


def source_sweep(plan: SweepPlan, value: float = 100.0, x_cut: float = -0.5) -> list[SourcePoint]:
    """Energy norm of the source solution along the grid.

    The load is the piecewise-constant f = value on {x < x_cut}, integrated
    exactly against the P1 basis.  Deltas where the stiffness matrix is
    numerically singular are flagged instead of solved.
    """
    points: list[SourcePoint] = []
    for d in plan.delta_grid:
        mesh = build_canonical(plan.mesh_params(d))
        system = assemble(mesh, plan.contrast)
        rhs = load_piecewise_x(mesh, value=value, x_cut=x_cut)[system.node_of_dof]
        try:
            x = solve_source(system, rhs)
        except SingularSystemError:
            points.append(SourcePoint(d, math.nan, True))
            continue
        u = np.zeros(mesh.n_nodes)
        u[system.node_of_dof] = x
        points.append(SourcePoint(d, h1_seminorm(mesh, u), False))
    return points


# ---------------------------------------------------------------------------
# serialization: CSV per experiment plus gnuplot-ready two-column data files
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    return _FMT.format(float(x))


def write_spectrum_csv(path, records: Sequence[SpectrumRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta", "neg_ln_delta", "ev_rank", "eigenvalue", "residual",
                    "n_neg", "n_pos", "solver_tag"])
        for rec in records:
            for rank, (lam, res) in enumerate(zip(rec.eigenvalues, rec.residuals)):
                w.writerow([_fmt(rec.delta), _fmt(-math.log(rec.delta)), rank,
                            _fmt(lam), _fmt(res), rec.n_neg, rec.n_pos, rec.solver_tag])


def write_crossings_csv(path, reports: Sequence[CrossingReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "delta_predicted", "delta_found", "error_lndelta"])
        for r in reports:
            w.writerow([r.n, _fmt(r.delta_predicted), _fmt(r.delta_found),
                        _fmt(r.error_lndelta)])


def write_periodicity_csv(path, report: PeriodicityReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "delta", "delta_shifted", "lambda", "lambda_shifted", "defect"])
        for p in report.pairs:
            w.writerow([p.j, _fmt(p.delta), _fmt(p.delta_shifted), _fmt(p.lam),
                        _fmt(p.lam_shifted), _fmt(p.defect)])


def write_source_csv(path, points: Sequence[SourcePoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta", "one_minus_delta", "h1_norm", "singular_flag"])
        for p in points:
            w.writerow([_fmt(p.delta), _fmt(1.0 - p.delta), _fmt(p.h1_norm),
                        int(p.singular)])


def write_spectrum_plots(outdir, records: Sequence[SpectrumRecord]) -> None:
    """Gnuplot-ready files: spectrum_vs_lndelta.dat (one block per eigenvalue
    rank) plus the first positive / first negative branch traces."""
    os.makedirs(outdir, exist_ok=True)
    recs = sorted(records, key=lambda r: -math.log(r.delta))
    kmax = max((len(r.eigenvalues) for r in recs), default=0)
    with open(os.path.join(outdir, "spectrum_vs_lndelta.dat"), "w") as fh:
        fh.write("# -ln(delta)  eigenvalue   (one block per rank)\n")
        for rank in range(kmax):
            for rec in recs:
                if rank < len(rec.eigenvalues):
                    fh.write(f"{-math.log(rec.delta):.17g} {rec.eigenvalues[rank]:.17g}\n")
            fh.write("\n")
    for name, j in (("first_positive.dat", 0), ("first_negative.dat", -1)):
        with open(os.path.join(outdir, name), "w") as fh:
            fh.write("# -ln(delta)  eigenvalue\n")
            for rec in recs:
                v = branch_value(rec, j)
                if v is not None:
                    fh.write(f"{-math.log(rec.delta):.17g} {v:.17g}\n")


def write_source_plot(outdir, points: Sequence[SourcePoint]) -> None:
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "source_norm.dat"), "w") as fh:
        fh.write("# 1-delta  h1_norm\n")
        for p in sorted(points, key=lambda q: 1.0 - q.delta):
            if not p.singular:
                fh.write(f"{1.0 - p.delta:.17g} {p.h1_norm:.17g}\n")


def write_lattice_csv(path, points: Sequence[complex]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im"])
        for z in points:
            w.writerow([_fmt(z.real), _fmt(z.imag)])
