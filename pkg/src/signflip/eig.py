"""Generalized symmetric eigensolvers for the indefinite pencil A x = lambda M x.

Two independent routes:

* `dense_solve` -- reference oracle for small reduced systems: the classical
  dense reduction (Cholesky of M, congruence to a standard symmetric problem,
  Householder tridiagonalization, implicit-shift QL), executed by LAPACK's
  generalized symmetric driver.
* `smallest_modulus` -- production path for sweeps: shift-invert Lanczos in
  the M-inner product on (A - s M)^{-1} M, with solves and matrix inertia
  both supplied by the banded LDL^T factorization.  Inertia counts at
  bracketing shifts certify that the returned set really is the k eigenvalues
  of smallest modulus: Krylov convergence alone can silently miss repeated or
  clustered interior eigenvalues, the counts cannot.

Every returned eigenpair carries a true relative residual
||A x - lambda M x|| / ||M x|| checked against the requested tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .banded import BandedLDLT, factor_banded
from .errors import FactorizationBreakdown, SingularSystemError, SolverError
from .fem import AssembledSystem

__all__ = [
    "SpectrumRecord",
    "dense_solve",
    "dense_record",
    "smallest_modulus",
    "inertia",
    "solve_source",
    "DENSE_CAP",
]

DENSE_CAP = 2000
_SHIFT_EPS = 1e-8   # relative shift perturbation when a factorization is singular
_MAX_BASIS = 220
_CLUSTER_REL = 1e-10  # eigenvalues closer than this (relatively) form a tie cluster


@dataclass
class SpectrumRecord:
    """Computed smallest-modulus eigenvalues at one delta.

    eigenvalues are sorted ascending; residuals are aligned with them.
    n_neg / n_pos count the negative / nonnegative returned values.
    """

    delta: float
    eigenvalues: list
    residuals: list
    n_neg: int
    n_pos: int
    solver_tag: str
    seed: int = 0

    @classmethod
    def from_pairs(cls, delta, values, residuals, tag, seed=0):
        order = np.argsort(values)
        vals = [float(np.asarray(values)[i]) for i in order]
        res = [float(np.asarray(residuals)[i]) for i in order]
        n_neg = sum(1 for v in vals if v < 0.0)
        return cls(delta=float(delta), eigenvalues=vals, residuals=res,
                   n_neg=n_neg, n_pos=len(vals) - n_neg, solver_tag=tag, seed=seed)


def _smallest_modulus_order(values) -> list[int]:
    """Index order by |value|, ties broken toward the negative value."""
    vals = np.asarray(values, dtype=float)
    return sorted(range(len(vals)), key=lambda i: (abs(vals[i]), 0 if vals[i] < 0 else 1))


def dense_solve(system: AssembledSystem, cap: int = DENSE_CAP) -> np.ndarray:
    """All eigenvalues of the reduced pencil by dense reduction; ascending order."""
    n = system.n
    if n > cap:
        raise SolverError(f"reduced dimension {n} exceeds the dense oracle cap {cap}")
    if n == 0:
        return np.zeros(0)
    try:
        return scipy.linalg.eigh(system.A.toarray(), system.M.toarray(), eigvals_only=True)
    except scipy.linalg.LinAlgError as exc:
        raise SolverError(
            f"mass matrix is not positive definite (Cholesky breakdown: {exc}); "
            "assembly invariant violated"
        ) from exc


def dense_record(system: AssembledSystem, k: int, delta: float = math.nan,
                 cap: int = DENSE_CAP) -> SpectrumRecord:
    """SpectrumRecord of the k smallest-modulus eigenvalues from the dense oracle."""
    n = system.n
    if not 1 <= k <= n:
        raise SolverError(f"need 1 <= k <= reduced dimension, got k={k}, n={n}")
    if n > cap:
        raise SolverError(f"reduced dimension {n} exceeds the dense oracle cap {cap}")
    try:
        vals, vecs = scipy.linalg.eigh(system.A.toarray(), system.M.toarray())
    except scipy.linalg.LinAlgError as exc:
        raise SolverError(f"mass matrix is not positive definite: {exc}") from exc
    sel = np.array(_smallest_modulus_order(vals)[:k], dtype=int)
    res = []
    for i in sel:
        x = vecs[:, i]
        mx = system.M @ x
        res.append(float(np.linalg.norm(system.A @ x - vals[i] * mx) / np.linalg.norm(mx)))
    return SpectrumRecord.from_pairs(delta, vals[sel], res, "DenseOracle")


def _shifted_band(system: AssembledSystem, shift: float) -> np.ndarray:
    if shift == 0.0:
        return system.A_band.copy()
    return system.A_band - shift * system.M_band


def inertia(system: AssembledSystem, shift: float) -> tuple[int, int, int]:
    """Signature (n_minus, n_zero, n_plus) of A - shift*M.

    By Sylvester's law (M is positive definite) n_minus is the number of
    pencil eigenvalues strictly below the shift; n_zero > 0 flags a shift that
    is numerically an eigenvalue.  Raises FactorizationBreakdown if no stable
    banded pivot sequence exists; callers retry with a perturbed shift.
    """
    return factor_banded(_shifted_band(system, shift)).inertia


class _InertiaCache:
    """Memoized eigenvalue counts nu(s) = #{lambda < s} for one pencil."""

    def __init__(self, system: AssembledSystem):
        self.system = system
        self._below: dict[float, int] = {}

    def below(self, shift: float) -> int:
        if shift not in self._below:
            nm, _, _ = inertia(self.system, shift)
            self._below[shift] = nm
        return self._below[shift]

    def in_interval(self, lo: float, hi: float) -> int:
        """Number of pencil eigenvalues in [lo, hi)."""
        return self.below(hi) - self.below(lo)


def _lanczos(fact: BandedLDLT, M, v0: np.ndarray, steps: int,
             deflate: np.ndarray | None = None):
    """M-inner-product Lanczos for op(v) = (A - s M)^{-1} (M v).

    Returns (alphas, betas, beta_next, V): T is tridiag(alphas, betas) and
    beta_next is the residual norm of the last step (0 on invariant-subspace
    breakdown).  Full reorthogonalization every step; optional deflation keeps
    the iteration M-orthogonal to already-converged vectors.
    """
    n = v0.size
    steps = min(steps, n)
    V = np.zeros((n, steps))
    MV = np.zeros((n, steps))
    alphas: list[float] = []
    betas: list[float] = []

    def project_out(w):
        if deflate is not None and deflate.shape[1] > 0:
            w = w - deflate @ (deflate.T @ (M @ w))
        return w

    v = project_out(np.asarray(v0, dtype=float))
    nv = math.sqrt(abs(v @ (M @ v)))
    if nv == 0.0:
        raise SolverError("Lanczos start vector vanished after deflation")
    v = v / nv
    beta_next = 0.0
    for j in range(steps):
        V[:, j] = v
        Mv = M @ v
        MV[:, j] = Mv
        w = fact.solve(Mv)
        w = project_out(w)
        alpha = float(w @ Mv)
        alphas.append(alpha)
        w = w - alpha * v
        if j > 0:
            w = w - betas[-1] * V[:, j - 1]
        for _ in range(2):  # two-pass full reorthogonalization (M inner product)
            w = w - V[:, : j + 1] @ (MV[:, : j + 1].T @ w)
        beta = math.sqrt(abs(w @ (M @ w)))
        beta_next = beta
        if beta <= 1e-14 * max(1.0, abs(alpha)):
            return np.array(alphas), np.array(betas), 0.0, V[:, : j + 1]
        if j + 1 < steps:
            betas.append(beta)
            v = w / beta
    return np.array(alphas), np.array(betas), beta_next, V


def _true_residual(system: AssembledSystem, lam: float, x: np.ndarray) -> float:
    mx = system.M @ x
    nmx = np.linalg.norm(mx)
    if nmx == 0.0:
        return math.inf
    return float(np.linalg.norm(system.A @ x - lam * mx) / nmx)


def _refine_pair(system: AssembledSystem, fact: BandedLDLT, lam: float, x: np.ndarray,
                 max_steps: int = 3):
    """Inverse-iteration steps with Rayleigh-quotient updates; keep the best pair."""
    best = (lam, x, _true_residual(system, lam, x))
    cur = x
    for _ in range(max_steps):
        try:
            z = fact.solve(system.M @ cur)
        except SingularSystemError:
            break
        nz = np.linalg.norm(z)
        if not np.isfinite(nz) or nz == 0.0:
            break
        z = z / nz
        mzz = float(z @ (system.M @ z))
        if mzz <= 0.0:
            break
        rho = float(z @ (system.A @ z)) / mzz
        res = _true_residual(system, rho, z)
        if res < best[2]:
            best = (rho, z, res)
            cur = z
        else:
            break
    return best


def _rqi_polish(system: AssembledSystem, lam: float, x: np.ndarray, tol: float,
                gap: float, steps: int = 3):
    """Targeted inverse iteration with a dedicated, well-conditioned shift.

    Inverse iteration through the shared sweep factorization only contracts
    toward the eigenvalue nearest that shift; a candidate far from it needs a
    shift of its own.  The shift sits 1e-3 of the local gap off the candidate
    (close enough for one-step contraction, far enough that the factorization
    stays well conditioned) and every solve gets one step of iterative
    refinement, which removes the eps*growth backward error of the pivoting-
    restricted banded factorization.
    """
    best = (lam, x, _true_residual(system, lam, x))
    off = max(1e-3 * gap, 1e-12 * max(abs(lam), 1.0))
    try:
        s_p, fact_p = _factor_with_retries(system, lam + off)
    except SolverError:
        return best
    K = system.A - s_p * system.M
    cur = x / np.linalg.norm(x)
    for _ in range(steps):
        try:
            z = fact_p.solve(system.M @ cur)
            z = z + fact_p.solve(system.M @ cur - K @ z)
        except SingularSystemError:
            break
        nz = np.linalg.norm(z)
        if not np.isfinite(nz) or nz == 0.0:
            break
        z = z / nz
        mzz = float(z @ (system.M @ z))
        if mzz <= 0.0:
            break
        rho = float(z @ (system.A @ z)) / mzz
        res = _true_residual(system, rho, z)
        if res < best[2]:
            best = (rho, z, res)
        cur = z
        if res <= 0.1 * tol:
            break
    return best


def _factor_with_retries(system: AssembledSystem, shift: float):
    """Factor A - s M, perturbing the shift when it lands on an eigenvalue.

    The sweep deliberately visits singular deltas, so a singular factorization
    is expected; retries move the shift by +/- eps*scale(A) and 3 eps*scale(A).
    """
    scale = system.a_scale()
    tried = []
    for bump in (0.0, _SHIFT_EPS * scale, -_SHIFT_EPS * scale, 3.0 * _SHIFT_EPS * scale):
        s = shift + bump
        tried.append(s)
        try:
            fact = factor_banded(_shifted_band(system, s))
        except FactorizationBreakdown:
            continue
        if not fact.singular:
            return s, fact
    raise SolverError(f"factorization of A - s M failed at every retry shift {tried}")


def _cluster_moduli(values: np.ndarray, scale: float) -> list[tuple[float, int]]:
    """Group |values| into tie clusters; returns (representative modulus, count) pairs."""
    mods = np.sort(np.abs(np.asarray(values, dtype=float)))
    clusters: list[list[float]] = []
    for m in mods:
        if clusters and m - clusters[-1][-1] <= _CLUSTER_REL * max(m, scale):
            clusters[-1].append(m)
        else:
            clusters.append([m])
    return [(float(np.mean(c)), len(c)) for c in clusters]


class _ShiftInvertRun:
    """State of one certified smallest-modulus computation."""

    def __init__(self, system: AssembledSystem, tol: float, seed: int, max_basis: int):
        self.system = system
        self.tol = tol
        self.rng = np.random.default_rng(seed)
        self.max_basis = max_basis
        self.nu = _InertiaCache(system)
        self.vals: list[float] = []
        self.res: list[float] = []
        self.vecs: list[np.ndarray] = []
        self.lam_scale = 1.0

    def harvest(self, fact: BandedLDLT, s: float, ncv: int, want: int,
                deflate: bool = False) -> int:
        """Run Lanczos at shift s and bank converged, novel eigenpairs."""
        n = self.system.n
        v0 = self.rng.standard_normal(n)
        defl = np.column_stack(self.vecs) if (deflate and self.vecs) else None
        try:
            alphas, betas, beta_next, V = _lanczos(fact, self.system.M, v0,
                                                   min(ncv, n), deflate=defl)
        except SolverError:
            return 0
        m = len(alphas)
        if m == 0:
            return 0
        if m == 1:
            theta = np.array([alphas[0]])
            y = np.ones((1, 1))
        else:
            theta, y = scipy.linalg.eigh_tridiagonal(alphas, betas)
        taken = 0
        for idx in np.argsort(-np.abs(theta)):
            if taken >= want:
                break
            th = theta[idx]
            if th == 0.0:
                continue
            if abs(beta_next * y[-1, idx]) > 1e-6 * abs(th):
                continue  # unconverged Ritz pair
            lam = s + 1.0 / th
            x = V @ y[:, idx]
            lam, x, res = _refine_pair(self.system, fact, lam, x)
            if res > self.tol:
                lam, x, res = _rqi_polish(self.system, lam, x, self.tol,
                                          gap=self._gap_estimate(lam))
            if res > self.tol:
                continue
            nx = math.sqrt(abs(x @ (self.system.M @ x)))
            if nx == 0.0:
                continue
            x = x / nx
            if self._is_duplicate(lam, x):
                continue
            self.vals.append(float(lam))
            self.res.append(float(res))
            self.vecs.append(x)
            taken += 1
        if self.vals:
            self.lam_scale = max(abs(v) for v in self.vals)
        return taken

    def _gap_estimate(self, lam: float) -> float:
        """Distance from lam to the nearest other accepted eigenvalue."""
        gaps = [abs(lam - v) for v in self.vals if abs(lam - v) > 1e-12 * self.lam_scale]
        return min(gaps) if gaps else 0.05 * max(abs(lam), self.lam_scale)

    def _is_duplicate(self, lam: float, x: np.ndarray) -> bool:
        for av, avec in zip(self.vals, self.vecs):
            if abs(lam - av) <= 1e-7 * max(abs(lam), abs(av), 1e-3 * self.lam_scale):
                if abs(avec @ (self.system.M @ x)) > 0.5:
                    return True
        return False

    def rescue(self, target: float, count: int) -> int:
        """Deflated targeted runs near `target` to pick up missed eigenvalues.

        The shift is kept a healthy fraction of the local spectral gap away
        from the target: a shift too close to the eigenvalue makes the
        factorization ill-conditioned enough that solve roundoff spoils the
        achievable residual.
        """
        if self.vals:
            gap = min((abs(target - v) for v in self.vals
                       if abs(target - v) > 1e-12 * self.lam_scale),
                      default=0.1 * max(abs(target), self.lam_scale))
        else:
            gap = 0.1 * max(abs(target), self.lam_scale)
        base = max(0.25 * gap, 1e-8 * self.lam_scale)
        got = 0
        for factor in (1.0, -1.0, 0.2, 3.0):
            if got >= count:
                break
            try:
                s_r, fact_r = _factor_with_retries(self.system, target + factor * base)
            except SolverError:
                continue
            got += self.harvest(fact_r, s_r, min(max(40, 2 * count + 10), self.system.n),
                                want=count - got, deflate=True)
        return got

    def recover_in(self, lo: float, hi: float) -> bool:
        """Localize (by inertia bisection) and rescue eigenvalues missing from [lo, hi).

        Returns True when at least one new certified pair was added.
        """
        added = False
        for _pass in range(10):
            inside = np.sort([v for v in self.vals if lo <= v < hi])
            cuts = [lo]
            for i in range(len(inside) - 1):
                mid = 0.5 * (inside[i] + inside[i + 1])
                if cuts[-1] < mid < hi:
                    cuts.append(mid)
            cuts.append(hi)
            deficit_total = 0
            progressed = False
            for a, b in zip(cuts[:-1], cuts[1:]):
                have = int(np.sum((inside >= a) & (inside < b)))
                missing = self.nu.in_interval(a, b) - have
                if missing <= 0:
                    continue
                deficit_total += missing
                aa, bb = a, b
                for _ in range(60):
                    width_tol = max(1e-13 * self.lam_scale,
                                    1e-13 * max(abs(aa), abs(bb)))
                    if bb - aa <= width_tol:
                        break
                    mid = 0.5 * (aa + bb)
                    left_missing = (self.nu.in_interval(aa, mid)
                                    - int(np.sum((inside >= aa) & (inside < mid))))
                    if left_missing > 0:
                        bb = mid
                    else:
                        aa = mid
                if self.rescue(0.5 * (aa + bb), missing) > 0:
                    progressed = True
                    added = True
                    break  # candidate list changed; recompute the partition
            if deficit_total == 0 or not progressed:
                return added
        return added


def smallest_modulus(system: AssembledSystem, k: int, tol: float = 1e-9,
                     delta: float = math.nan, seed: int = 0,
                     max_basis: int = _MAX_BASIS, return_vectors: bool = False):
    """The k eigenvalues of smallest modulus of A x = lambda M x, certified.

    Shift-invert Lanczos at s = 0 (perturbed when A is numerically singular)
    finds candidates; each is polished by an inverse-iteration/Rayleigh step
    and must meet the residual tolerance.  Inertia counts at brackets just
    inside and just outside the k-th modulus then prove that no eigenvalue of
    smaller modulus was missed; deficits trigger bisection-localized, deflated
    rescue runs (this is how repeated eigenvalues are recovered).  Ties at the
    k-th modulus are broken toward the negative value.
    """
    n = system.n
    if not 1 <= k < n:
        raise SolverError(f"need 1 <= k < reduced dimension, got k={k}, n={n}")

    run = _ShiftInvertRun(system, tol, seed, max_basis)
    s0, fact0 = _factor_with_retries(system, 0.0)

    ncv = min(n, max(2 * k + 20, 40))
    run.harvest(fact0, s0, ncv, want=k + 4)
    while len(run.vals) < min(k + 2, n) and ncv < min(max_basis, n):
        ncv = min(max(ncv + 40, int(1.5 * ncv)), max_basis, n)
        run.harvest(fact0, s0, ncv, want=k + 4 - len(run.vals), deflate=True)
    if not run.vals:
        raise SolverError(
            f"shift-invert Lanczos found no converged eigenpairs at tol {tol}")

    for _round in range(40):
        if len(run.vals) < k:
            # widen the certified radius until it provably holds >= k eigenvalues,
            # then recover everything missing inside it
            r = max(run.lam_scale, 1e-12 * system.a_scale(), 1e-300)
            for _ in range(60):
                r_hi = r * (1 + 1e-6) + 1e-12 * run.lam_scale
                if run.nu.in_interval(-r_hi, r_hi) >= k:
                    break
                r *= 2.0
            if not run.recover_in(-r_hi, r_hi):
                raise SolverError(
                    f"only {len(run.vals)} of {k} requested eigenpairs converged "
                    f"(searched modulus <= {r_hi:.3e})", best_residuals=run.res)
            continue

        vals = np.array(run.vals)
        order = _smallest_modulus_order(vals)
        vals_by_mod = vals[np.array(order, dtype=int)]
        kth_mod = abs(vals_by_mod[k - 1])
        clusters = _cluster_moduli(vals_by_mod, run.lam_scale)
        tie_idx = next(i for i, (cm, _) in enumerate(clusters)
                       if abs(cm - kth_mod) <= _CLUSTER_REL * max(cm, run.lam_scale) + 1e-300
                       or cm >= kth_mod)
        tie_mod = clusters[tie_idx][0]
        below = [cm for cm, _ in clusters[:tie_idx]]
        r_in = 0.5 * (below[-1] + tie_mod) if below else 0.5 * tie_mod
        if tie_idx + 1 < len(clusters):
            r_out = 0.5 * (tie_mod + clusters[tie_idx + 1][0])
        else:
            r_out = tie_mod * (1 + 1e-6) + 1e-12 * run.lam_scale

        strict_found = int(np.sum(np.abs(vals) < r_in))
        strict_true = run.nu.in_interval(-r_in, r_in)
        if strict_true > strict_found:
            if not run.recover_in(-r_in, r_in):
                raise SolverError(
                    f"inertia certifies {strict_true} eigenvalues of modulus < {r_in:.6e} "
                    f"but only {strict_found} converged and rescue failed",
                    best_residuals=run.res)
            continue
        if strict_true < strict_found:
            raise SolverError(
                "inertia count disagrees with residual-certified eigenvalues "
                f"({strict_found} computed vs {strict_true} counted in "
                f"(-{r_in:.6e}, {r_in:.6e}))")

        band_true = run.nu.in_interval(-r_out, r_out) - strict_true
        band_found = int(np.sum((np.abs(vals) >= r_in) & (np.abs(vals) < r_out)))
        need = k - strict_found
        if band_found < need:
            if band_true > band_found and (run.rescue(tie_mod, band_true - band_found)
                                           or run.rescue(-tie_mod, band_true - band_found)):
                continue
            raise SolverError(
                f"tie cluster at modulus {tie_mod:.6e} holds {band_true} eigenvalues, "
                f"only {band_found} converged, {need} needed", best_residuals=run.res)

        chosen = np.array(order[:k], dtype=int)
        record = SpectrumRecord.from_pairs(delta, vals[chosen],
                                           np.array(run.res)[chosen],
                                           "ShiftInvert", seed=seed)
        if return_vectors:
            vecs = np.column_stack([run.vecs[i] for i in chosen])
            return record, vecs[:, np.argsort(vals[chosen])]
        return record

    raise SolverError("certification loop failed to settle after 40 rounds",
                      best_residuals=run.res)


def solve_source(system: AssembledSystem, rhs: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Solve A x = rhs on the interior dofs via banded LDL^T plus iterative refinement.

    Raises SingularSystemError when A is numerically singular (for the
    canonical sweep that means delta sits at one of the injectivity-loss
    values delta^n).
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (system.n,):
        raise SolverError(f"rhs must have shape ({system.n},), got {rhs.shape}")
    try:
        fact = factor_banded(system.A_band.copy())
    except FactorizationBreakdown as exc:
        raise SingularSystemError(
            f"stiffness factorization broke down ({exc}); delta is numerically "
            "at an injectivity-loss value delta^n") from exc
    x = fact.solve(rhs)  # raises SingularSystemError on zero pivots
    for _ in range(2):
        x = x + fact.solve(rhs - system.A @ x)
    nrhs = np.linalg.norm(rhs)
    nres = np.linalg.norm(rhs - system.A @ x)
    if nrhs > 0 and nres > tol * nrhs:
        raise SolverError(
            f"iterative refinement stalled at relative residual {nres / nrhs:.3e} > {tol:.1e}")
    return x
