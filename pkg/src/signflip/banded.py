"""Banded symmetric indefinite LDL^T factorization with 1x1/2x2 pivoting.

Factors a symmetric banded matrix K as L B L^T where L is unit lower
triangular (bandwidth at most one larger than K's) and B is block diagonal
with 1x1 and 2x2 blocks.  Pivots are chosen between the diagonal entry and
the adjacent 2x2 block by a Bunch-Kaufman style magnitude test; restricting
interchanges to adjacent rows keeps the factor inside the band, which is what
makes repeated factorizations along a shift sweep affordable.

The factorization supplies three things at once:
  * solves with K (forward/backward banded substitution plus block-diagonal
    inversion),
  * the inertia (n_minus, n_zero, n_plus) of K by Sylvester's law of inertia,
    read off the 1x1/2x2 blocks of B,
  * a singularity flag (near-zero pivots), used by the eigensolver to detect
    shifts that land on an eigenvalue.

Entries are stored lower-band style: band[d, j] = K[j + d, j], d = 0..bw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FactorizationBreakdown, SingularSystemError

__all__ = ["BandedLDLT", "factor_banded"]

_ALPHA = (1.0 + np.sqrt(17.0)) / 8.0  # classical Bunch-Kaufman threshold
_GROWTH_CAP = 1e14


@dataclass
class BandedLDLT:
    """Factor container; `kind[k]` is 1 (1x1 block), 2 (start of 2x2), 0 (second
    column of a 2x2) or -1 (exact zero column, counted in n_zero)."""

    n: int
    bw: int           # bandwidth of L (input bandwidth + 1)
    L: np.ndarray     # (bw+1, n); row 0 unused for L, rows 1..bw hold L[k+d, k]
    d: np.ndarray     # diagonal of B
    e: np.ndarray     # e[k] = off-diagonal of the 2x2 block starting at k
    kind: np.ndarray
    n_minus: int
    n_zero: int
    n_plus: int
    growth: float
    zero_tol: float

    @property
    def inertia(self) -> tuple[int, int, int]:
        return (self.n_minus, self.n_zero, self.n_plus)

    @property
    def singular(self) -> bool:
        return self.n_zero > 0

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve K x = rhs using the stored factors; rejects singular blocks."""
        if self.singular:
            raise SingularSystemError(
                "matrix is numerically singular (zero pivot in LDL^T); "
                "if this is the stiffness matrix at some delta, that delta sits "
                "numerically at an injectivity-loss value delta^n"
            )
        n, bw, L = self.n, self.bw, self.L
        x = np.array(rhs, dtype=float, copy=True)
        if x.shape != (n,):
            raise ValueError(f"rhs must have shape ({n},), got {x.shape}")
        # forward: L y = rhs
        for k in range(n - 1):
            m = min(bw, n - 1 - k)
            if m > 0:
                x[k + 1:k + 1 + m] -= L[1:1 + m, k] * x[k]
        # block diagonal: B z = y
        k = 0
        while k < n:
            if self.kind[k] == 2:
                a, b, c = self.d[k], self.e[k], self.d[k + 1]
                det = a * c - b * b
                xk, xk1 = x[k], x[k + 1]
                x[k] = (c * xk - b * xk1) / det
                x[k + 1] = (a * xk1 - b * xk) / det
                k += 2
            else:
                x[k] /= self.d[k]
                k += 1
        # backward: L^T x = z
        for k in range(n - 2, -1, -1):
            m = min(bw, n - 1 - k)
            if m > 0:
                x[k] -= np.dot(L[1:1 + m, k], x[k + 1:k + 1 + m])
        return x


def factor_banded(band: np.ndarray, zero_tol_rel: float = 1e-14) -> BandedLDLT:
    """Factor a symmetric banded matrix given in lower-band storage.

    `band` has shape (bw+1, n) with band[d, j] = K[j+d, j].  Pivots smaller
    than zero_tol_rel times the largest input magnitude are treated as exact
    zeros (their column must already be negligible); they are counted in
    n_zero and make the factorization unusable for solves but still valid for
    inertia.  Raises FactorizationBreakdown when neither the 1x1 nor the
    adjacent 2x2 pivot can bound element growth.
    """
    band = np.asarray(band, dtype=float)
    bw_in, n = band.shape[0] - 1, band.shape[1]
    if n == 0:
        return BandedLDLT(0, 0, np.zeros((1, 0)), np.zeros(0), np.zeros(0),
                          np.zeros(0, dtype=np.int8), 0, 0, 0, 0.0, 0.0)
    scale = float(np.max(np.abs(band)))
    ztol = zero_tol_rel * max(scale, 1e-300)

    bw = bw_in + 1  # one extra row of fill from the first column of 2x2 blocks
    W = np.zeros((bw + 1, n))
    W[: bw_in + 1] = band

    d = np.zeros(n)
    e = np.zeros(n)
    kind = np.zeros(n, dtype=np.int8)
    n_minus = n_zero = n_plus = 0
    growth = 0.0

    # sliding-index helper: X[t, c] = S_pad[min(t+c, rows-1), c] realizes the
    # band-coordinate subtraction K[j+t, j] -= S[(j-j0)+t, j-j0]
    idx_cache: dict[int, np.ndarray] = {}

    def sliding(mat: np.ndarray, m: int) -> np.ndarray:
        key = m
        if key not in idx_cache:
            idx_cache[key] = np.add.outer(np.arange(m), np.arange(m))
        rows = idx_cache[key]
        pad = np.zeros((2 * m, m))
        pad[:m] = mat
        return pad[np.minimum(rows, 2 * m - 1), np.arange(m)[None, :]]

    k = 0
    while k < n:
        a = W[0, k]
        m1 = min(bw_in, n - 1 - k)
        col = W[1:1 + m1, k] if m1 > 0 else np.zeros(0)
        lam = float(np.max(np.abs(col))) if m1 > 0 else 0.0

        if max(abs(a), lam) <= ztol:
            # zero column: exact null direction
            d[k] = 0.0
            kind[k] = -1
            n_zero += 1
            W[1:, k] = 0.0
            k += 1
            continue

        use2 = False
        if abs(a) < _ALPHA * lam and k < n - 1:
            b = W[1, k]
            c = W[0, k + 1]
            det = a * c - b * b
            blk = max(abs(a), abs(b), abs(c))
            g2 = lam * blk / abs(det) if det != 0.0 else np.inf
            g1 = lam / abs(a) if a != 0.0 else np.inf
            if g2 <= g1:
                use2 = True
            elif g1 > _GROWTH_CAP:
                if g2 > _GROWTH_CAP:
                    raise FactorizationBreakdown(
                        f"no stable pivot at column {k} "
                        f"(|a|={abs(a):.2e}, column max {lam:.2e}, 2x2 det {det:.2e})"
                    )
                use2 = True

        if not use2:
            if a == 0.0:
                # unreachable: a zero diagonal with a nonzero column forces the
                # 2x2 (g1 = inf) or the breakdown above
                raise FactorizationBreakdown(f"zero 1x1 pivot at column {k}")
            d[k] = a
            kind[k] = 1
            if a > 0:
                n_plus += 1
            else:
                n_minus += 1
            if m1 > 0:
                lcol = col / a
                S = np.outer(col, lcol)  # S[i,j] = col_i * col_j / a
                X = sliding(S, m1)
                W[0:m1, k + 1:k + 1 + m1] -= X
                growth = max(growth, float(np.max(np.abs(S))))
                W[1:1 + m1, k] = lcol
            k += 1
        else:
            b = W[1, k]
            c = W[0, k + 1]
            det = a * c - b * b
            m2 = min(bw_in, n - 2 - k)
            if m2 > 0:
                col_k = W[2:2 + m2, k]      # K[k+2 .. k+1+m2, k]
                col_k1 = W[1:1 + m2, k + 1]  # K[k+2 .. k+1+m2, k+1]
                C = np.column_stack([col_k, col_k1])
                # L_blk = C * inv([[a, b], [b, c]])
                Lb = np.column_stack([
                    (C[:, 0] * c - C[:, 1] * b) / det,
                    (C[:, 1] * a - C[:, 0] * b) / det,
                ])
                S = Lb @ C.T
                X = sliding(S, m2)
                W[0:m2, k + 2:k + 2 + m2] -= X
                growth = max(growth, float(np.max(np.abs(S))))
                W[2:2 + m2, k] = Lb[:, 0]
                W[1:1 + m2, k + 1] = Lb[:, 1]
            d[k], e[k], d[k + 1] = a, b, c
            W[1, k] = 0.0
            kind[k], kind[k + 1] = 2, 0
            # inertia of the 2x2 block [[a, b], [b, c]]
            if abs(det) <= ztol * ztol:
                n_zero += 1
                if a + c > 0:
                    n_plus += 1
                elif a + c < 0:
                    n_minus += 1
                else:
                    n_zero += 1
            elif det < 0.0:
                n_plus += 1
                n_minus += 1
            else:
                if a + c > 0:
                    n_plus += 2
                else:
                    n_minus += 2
            k += 2

    growth = growth / max(scale, 1e-300)
    return BandedLDLT(n, bw, W, d, e, kind, n_minus, n_zero, n_plus, growth, ztol)
