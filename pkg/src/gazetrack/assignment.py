"""Optimal rectangular assignment with forbidden entries.

Among all matchings of maximum cardinality that avoid forbidden entries,
``solve`` returns one of minimum total cost. Forbidden entries are priced
above any possible saving in real cost, which turns the lexicographic
(cardinality, cost) objective into a single Hungarian solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

__all__ = ["CostMatrix", "Assignment", "solve"]


@dataclass
class CostMatrix:
    cost: np.ndarray
    forbidden: np.ndarray | None = None

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=np.float64)
        if self.cost.ndim != 2:
            if self.cost.size == 0:
                self.cost = self.cost.reshape(0, 0)
            else:
                raise ValueError("cost matrix must be 2-D")
        if self.forbidden is None:
            self.forbidden = np.zeros(self.cost.shape, dtype=bool)
        else:
            self.forbidden = np.asarray(self.forbidden, dtype=bool).reshape(self.cost.shape)
        bad = ~np.isfinite(self.cost) & ~self.forbidden
        if bad.any():
            raise ValueError("non-forbidden costs must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape


@dataclass
class Assignment:
    pairs: list[tuple[int, int]] = field(default_factory=list)
    unmatched_rows: list[int] = field(default_factory=list)
    unmatched_cols: list[int] = field(default_factory=list)
    total_cost: float = 0.0


def _feasible(tight: np.ndarray, must: np.ndarray) -> np.ndarray | None:
    """A row-perfect matching inside ``tight`` covering every ``must`` column, or None.

    Solved as a 0/1 assignment: using a must column costs 0, any other tight
    edge 1, a non-tight edge more than all rows together. The optimum reaches
    ``n - must.sum()`` exactly when such a matching exists, and every value
    involved is a small integer, so the comparison is exact.
    """
    n = tight.shape[0]
    c = np.where(tight, np.where(must, 0.0, 1.0)[None, :], float(n + 1))
    r2c = kernels.linear_assignment(c)
    if c[np.arange(n), r2c].sum() != n - int(must.sum()):
        return None
    return r2c


def _canonical(work, ok, row_to_col, u, v, transposed):
    """Among optimal matchings pick the one with the lexicographically smallest pair list.

    Optimal matchings of ``work`` are exactly the row-perfect matchings on
    zero reduced-cost edges that cover every column with a negative
    potential. When the real (non-forbidden) tight edges are just the ones
    already used, every optimum reports the same pairs and nothing is done.
    Otherwise the pair list is fixed one original row at a time, smallest
    partner first, keeping whatever choice still leaves a full optimum.
    """
    n, m = work.shape
    reduced = work - u[:, None] - v[None, :]
    scale = float(np.abs(work[ok]).max(initial=1.0))
    tol = 1e-10 * max(scale, 1.0)
    tight = reduced <= tol
    real = tight & ok
    idx = np.arange(n)
    if int(real.sum()) == int(ok[idx, row_to_col].sum()):
        return row_to_col
    must = v < -tol
    # fix vertices of the side holding the original rows
    if transposed:
        real, tight = real.T, tight.T
    for x in range(real.shape[0]):
        for y in np.flatnonzero(real[x]).tolist() + [None]:
            trial = tight.copy()
            if y is None:
                trial[x, real[x]] = False
            else:
                keep = trial[x, y]
                trial[x, :] = False
                trial[:, y] = False
                trial[x, y] = keep
            found = _feasible(trial.T if transposed else trial, must)
            if found is not None:
                tight = trial
                row_to_col = found
                break
    return row_to_col


def solve(m: CostMatrix | np.ndarray, forbidden: np.ndarray | None = None) -> Assignment:
    if not isinstance(m, CostMatrix):
        m = CostMatrix(m, forbidden)
    n_rows, n_cols = m.shape
    allowed = ~m.forbidden
    # rows and columns with no allowed entry can never be matched
    rows = np.flatnonzero(allowed.any(axis=1)) if n_cols else np.empty(0, dtype=np.int64)
    cols = np.flatnonzero(allowed.any(axis=0)) if n_rows else np.empty(0, dtype=np.int64)
    if rows.size == 0:
        return Assignment([], list(range(n_rows)), list(range(n_cols)), 0.0)

    cost, ok = m.cost, allowed
    if rows.size < n_rows:
        cost, ok = cost[rows], ok[rows]
    if cols.size < n_cols:
        cost, ok = cost[:, cols], ok[:, cols]
    transposed = rows.size > cols.size
    if transposed:
        cost, ok = cost.T, ok.T
    lo = float(np.where(ok, cost, np.inf).min())
    spread = float(np.where(ok, cost, -np.inf).max()) - lo
    penalty = spread * min(rows.size, cols.size) + 1.0
    work = np.where(ok, cost - lo, penalty)
    row_to_col, u, v = kernels.linear_assignment(work, duals=True)
    row_to_col = _canonical(work, ok, row_to_col, u, v, transposed)

    idx = np.arange(row_to_col.size)
    keep = ok[idx, row_to_col]
    a, b = idx[keep], row_to_col[keep]
    if transposed:
        a, b = b, a
    pr, pc = rows[a], cols[b]
    order = np.argsort(pr, kind="stable")
    pr, pc = pr[order], pc[order]
    row_free = np.ones(n_rows, dtype=bool)
    row_free[pr] = False
    col_free = np.ones(n_cols, dtype=bool)
    col_free[pc] = False
    return Assignment(
        pairs=list(zip(pr.tolist(), pc.tolist())),
        unmatched_rows=np.flatnonzero(row_free).tolist(),
        unmatched_cols=np.flatnonzero(col_free).tolist(),
        total_cost=math.fsum(m.cost[pr, pc].tolist()),
    )
