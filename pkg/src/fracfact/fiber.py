"""Exhaustive enumeration of small fibers and exact conditional p-values.

A fiber is the set of nonnegative integer vectors ``y`` (optionally bounded
above cellwise) with ``A @ y == t``.  Enumeration is a depth-first search
over cells; each partial assignment is pruned by the range the unassigned
cells can still contribute to every row.
"""

from __future__ import annotations

import math
import os
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .errors import BudgetExceeded, ValidationError

# ties in T(y) >= T(y_obs) are judged with this relative tolerance
TIE_RTOL = 1e-9

DEFAULT_MAX_POINTS = int(os.environ.get("FRACFACT_MAX_FIBER_POINTS", 2_000_000))
DEFAULT_MAX_NODES = int(os.environ.get("FRACFACT_MAX_FIBER_NODES", 2_000_000))


@dataclass(frozen=True)
class Fiber:
    matrix: np.ndarray = field(repr=False)
    target: np.ndarray
    upper: np.ndarray | None
    points: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.points.shape[0]

    def index(self) -> dict[bytes, int]:
        pts = np.ascontiguousarray(self.points, dtype=np.int64)
        return {row.tobytes(): i for i, row in enumerate(pts)}

    def position(self, y) -> int:
        key = np.ascontiguousarray(y, dtype=np.int64).tobytes()
        try:
            return self.index()[key]
        except KeyError:
            raise ValidationError("vector is not a point of this fiber") from None


def _cell_upper_bounds(A: np.ndarray, t: np.ndarray, upper) -> list[float]:
    k = A.shape[1]
    u = [math.inf] * k if upper is None else [float(x) for x in upper]
    for r in range(A.shape[0]):
        row = A[r]
        if np.all(row >= 0):
            for j in np.flatnonzero(row):
                u[j] = min(u[j], float(t[r] // row[j]))
    return u


def _pivot_split(A: np.ndarray) -> tuple[list[int], list[int], list[int]]:
    """Independent rows, pivot columns and free columns of ``A`` (exact arithmetic)."""
    M = [[Fraction(int(x)) for x in row] for row in A]
    nrows, k = A.shape
    rows: list[int] = []
    pivots: list[int] = []
    # eliminate on a copy, tracking which original rows stay independent
    R = [list(r) for r in M]
    for c in range(k):
        piv = next((i for i in range(nrows) if i not in rows and R[i][c] != 0), None)
        if piv is None:
            continue
        rows.append(piv)
        pivots.append(c)
        for i in range(nrows):
            if i != piv and R[i][c] != 0:
                f = R[i][c] / R[piv][c]
                R[i] = [a - f * b for a, b in zip(R[i], R[piv])]
    free = [c for c in range(k) if c not in pivots]
    return sorted(rows), pivots, free


def _integer_inverse(B: np.ndarray) -> tuple[np.ndarray, int]:
    """``(adj, det)`` with ``B @ adj == det * I``, all exact integers."""
    n = B.shape[0]
    M = [[Fraction(int(x)) for x in row] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(B)]
    det = Fraction(1)
    for c in range(n):
        piv = next(i for i in range(c, n) if M[i][c] != 0)
        if piv != c:
            M[c], M[piv] = M[piv], M[c]
            det = -det
        det *= M[c][c]
        pv = M[c][c]
        M[c] = [x / pv for x in M[c]]
        for i in range(n):
            if i != c and M[i][c] != 0:
                f = M[i][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[c])]
    d = int(det)
    adj = np.array([[int(x * d) for x in row[n:]] for row in M], dtype=np.int64)
    return adj, d


def enumerate_fiber(
    A,
    t,
    upper=None,
    max_points: int | None = None,
    max_nodes: int | None = None,
) -> Fiber:
    """All nonnegative integer ``y`` with ``A y = t`` (and ``y <= upper``).

    Only the cells outside a column basis of ``A`` are searched, depth
    first with interval pruning row by row; the basic cells are then solved
    exactly, in vectorized batches, and kept when integral and in range.

    Raises:
        BudgetExceeded: "fiber too large" once either cap is hit.
        ValidationError: the fiber is not provably bounded.
    """
    A = np.asarray(A, dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    max_points = DEFAULT_MAX_POINTS if max_points is None else max_points
    max_nodes = DEFAULT_MAX_NODES if max_nodes is None else max_nodes
    nrows, k = A.shape
    if t.shape != (nrows,):
        raise ValidationError(f"target has length {t.shape[0]}, matrix has {nrows} rows")
    up = None if upper is None else np.asarray(upper, dtype=np.int64)
    u = _cell_upper_bounds(A, t, upper)
    if any(math.isinf(x) for x in u):
        raise ValidationError("fiber is unbounded: add an all-nonnegative row or cell bounds")
    empty = Fiber(A, t, up, np.zeros((0, k), dtype=np.int64))
    if k == 0 or any(x < 0 for x in u):
        return empty
    u = [int(x) for x in u]
    rows, pivots, free = _pivot_split(A)
    B = A[np.ix_(rows, pivots)]
    adj, det = _integer_inverse(B)
    ub_arr = np.array(u, dtype=np.int64)

    # free cells, most constrained first; every cell still bounds the row reach
    norms = np.abs(A).max(axis=0)
    free = sorted(free, key=lambda j: (-norms[j], j))
    nf = len(free)
    cols = [[int(A[r, j]) for r in range(nrows)] for j in free]
    ub = [u[j] for j in free]
    base_hi = [sum(int(A[r, j]) * u[j] for j in pivots if A[r, j] > 0) for r in range(nrows)]
    base_lo = [sum(int(A[r, j]) * u[j] for j in pivots if A[r, j] < 0) for r in range(nrows)]
    hi_after = [[0] * nrows for _ in range(nf + 1)]
    lo_after = [[0] * nrows for _ in range(nf + 1)]
    hi_after[nf] = base_hi
    lo_after[nf] = base_lo
    for d in range(nf - 1, -1, -1):
        for r in range(nrows):
            a = cols[d][r]
            hi_after[d][r] = hi_after[d + 1][r] + (a * ub[d] if a > 0 else 0)
            lo_after[d][r] = lo_after[d + 1][r] + (a * ub[d] if a < 0 else 0)

    leaves: list[list[int]] = []
    found: list[np.ndarray] = []
    count = 0
    current = [0] * nf
    resid = [int(x) for x in t]
    nodes = 0
    A_free = A[:, free]
    B_rows = A[rows]

    def flush() -> None:
        nonlocal count
        if not leaves:
            return
        F = np.array(leaves, dtype=np.int64).reshape(len(leaves), nf)
        leaves.clear()
        rhs = t[rows][None, :] - F @ A_free[rows].T if nf else np.broadcast_to(t[rows], (1, len(rows)))
        num = rhs @ adj.T
        ok = np.all(num % det == 0, axis=1)
        sol = num // det
        ok &= np.all(sol >= 0, axis=1) & np.all(sol <= ub_arr[pivots], axis=1)
        if not ok.any():
            return
        Y = np.zeros((int(ok.sum()), k), dtype=np.int64)
        Y[:, free] = F[ok]
        Y[:, pivots] = sol[ok]
        # dependent rows of A must hold too
        Y = Y[np.all(Y @ A.T == t, axis=1)]
        count += len(Y)
        if count > max_points:
            raise BudgetExceeded(f"fiber too large: more than {max_points} points")
        found.append(Y)

    def visit(d: int) -> None:
        nonlocal nodes
        nodes += 1
        if nodes > max_nodes:
            raise BudgetExceeded(f"fiber too large: search exceeded {max_nodes} nodes")
        if d == nf:
            leaves.append(list(current))
            if len(leaves) >= 65536:
                flush()
            return
        col = cols[d]
        hi_rest = hi_after[d + 1]
        lo_rest = lo_after[d + 1]
        lo, hi = 0, ub[d]
        for r in range(nrows):
            a = col[r]
            lo_r = resid[r] - hi_rest[r]
            hi_r = resid[r] - lo_rest[r]
            if a == 0:
                if lo_r > 0 or hi_r < 0:
                    return
            elif a > 0:
                lo = max(lo, -((-lo_r) // a))
                hi = min(hi, hi_r // a)
            else:
                lo = max(lo, -((-hi_r) // a))
                hi = min(hi, lo_r // a)
            if lo > hi:
                return
        for v in range(lo, hi + 1):
            current[d] = v
            for r in range(nrows):
                resid[r] -= col[r] * v
            visit(d + 1)
            for r in range(nrows):
                resid[r] += col[r] * v
        current[d] = 0

    visit(0)
    flush()
    if not found:
        return empty
    arr = np.concatenate(found)
    arr = arr[np.lexsort(arr.T[::-1])]
    return Fiber(A, t, up, arr)


def log_weights(points: np.ndarray, family: str = "poisson", n=None) -> np.ndarray:
    """Unnormalized log conditional probabilities of fiber points."""
    pts = np.asarray(points, dtype=np.float64)
    if family == "poisson":
        return -gammaln(pts + 1.0).sum(axis=1)
    if family == "binomial":
        if n is None:
            raise ValidationError("binomial weights need denominators")
        n = np.asarray(n, dtype=np.float64)
        return -(gammaln(pts + 1.0) + gammaln(n - pts + 1.0)).sum(axis=1)
    raise ValidationError(f"unknown family {family!r}")


def exact_null_distribution(fiber: Fiber, family: str = "poisson") -> np.ndarray:
    """Conditional probabilities aligned with ``fiber.points``.

    Poisson weights are ``prod 1/y_i!``; binomial weights are
    ``prod 1/(y_i! (n_i - y_i)!)`` with ``n`` taken from ``fiber.upper``.
    """
    if len(fiber) == 0:
        return np.zeros(0)
    lw = log_weights(fiber.points, family, fiber.upper)
    lw -= lw.max()
    w = np.exp(lw)
    return w / w.sum()


def exact_pvalue(
    fiber: Fiber,
    statistic: Callable[[np.ndarray], float],
    observed,
    family: str = "poisson",
    probs: np.ndarray | None = None,
) -> float:
    """``sum_y f(y) 1[T(y) >= T(y_obs)]`` over the whole fiber (ties count)."""
    if probs is None:
        probs = exact_null_distribution(fiber, family)
    t_obs = float(statistic(np.asarray(observed)))
    tol = TIE_RTOL * max(1.0, abs(t_obs))
    values = np.array([statistic(y) for y in fiber.points], dtype=np.float64)
    return float(min(1.0, probs[values >= t_obs - tol].sum()))
