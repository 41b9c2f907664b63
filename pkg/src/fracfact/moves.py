"""Move sets: Graver completion, 4ti2-format import/export, connectivity checks."""

from __future__ import annotations

import hashlib
import os
from collections import deque
from dataclasses import dataclass, field
from math import gcd
from functools import reduce as _reduce

import numpy as np

from .errors import BudgetExceeded, InvalidMoveError, ParseError, ValidationError
from .fiber import Fiber, enumerate_fiber
from .lattice import format_matrix, parse_matrix

DEFAULT_MAX_ELEMENTS = int(os.environ.get("FRACFACT_MAX_GRAVER", 100_000))


def canonical_sign(z) -> np.ndarray:
    """Flip ``z`` so that its first nonzero entry is positive."""
    z = np.asarray(z, dtype=np.int64)
    nz = np.flatnonzero(z)
    if nz.size and z[nz[0]] < 0:
        return -z
    return z.copy()


def degree(z) -> int:
    z = np.asarray(z)
    return int(max(z[z > 0].sum(), -z[z < 0].sum()))


def matrix_fingerprint(A) -> str:
    A = np.ascontiguousarray(A, dtype=np.int64)
    h = hashlib.sha256()
    h.update(np.array(A.shape, dtype=np.int64).tobytes())
    h.update(A.tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class MoveSet:
    """Sign-canonical, duplicate-free kernel vectors of a bound matrix."""

    moves: np.ndarray = field(repr=False)
    provenance: str = "computed"
    fingerprint: str | None = None

    def __post_init__(self):
        m = np.asarray(self.moves, dtype=np.int64)
        if m.ndim != 2:
            m = m.reshape(len(m), -1) if m.size else np.zeros((0, 0), dtype=np.int64)
        m = np.ascontiguousarray(m)
        m.setflags(write=False)
        object.__setattr__(self, "moves", m)

    def __len__(self) -> int:
        return self.moves.shape[0]

    def __iter__(self):
        return iter(self.moves)

    @property
    def length(self) -> int:
        return self.moves.shape[1]

    def check(self, A) -> None:
        """Raise unless every move is a nonzero kernel vector of ``A``."""
        A = np.asarray(A, dtype=np.int64)
        if len(self) and A.shape[1] != self.length:
            raise ValidationError(f"moves have length {self.length}, matrix has {A.shape[1]} columns")
        bad = np.flatnonzero(np.any(A @ self.moves.T != 0, axis=0)) if len(self) else []
        if len(bad):
            raise InvalidMoveError(int(bad[0]) + 1)
        zero = np.flatnonzero(~self.moves.any(axis=1)) if len(self) else []
        if len(zero):
            raise InvalidMoveError(int(zero[0]) + 1, f"invalid move at row {int(zero[0]) + 1}: zero vector")

    def without(self, index: int) -> "MoveSet":
        keep = [i for i in range(len(self)) if i != index]
        return MoveSet(self.moves[keep], self.provenance, self.fingerprint)

    def to_text(self) -> str:
        if not len(self):
            return "0 0\n"
        return format_matrix(self.moves)


def _dedupe(rows) -> np.ndarray:
    seen = {}
    for z in rows:
        c = canonical_sign(z)
        seen.setdefault(c.tobytes(), c)
    if not seen:
        return np.zeros((0, 0), dtype=np.int64)
    out = np.array(list(seen.values()), dtype=np.int64)
    return out[np.lexsort(out.T[::-1])[::-1]]


def make_moveset(rows, A=None, provenance: str = "computed") -> MoveSet:
    moves = _dedupe(rows)
    fp = matrix_fingerprint(A) if A is not None else None
    ms = MoveSet(moves, provenance, fp)
    if A is not None:
        ms.check(A)
    return ms


class _Pool:
    """Growable store of sign representatives with vectorized reducer lookup."""

    def __init__(self, n: int):
        self.data = np.zeros((64, n), dtype=np.int64)
        self.size = 0

    def add(self, v: np.ndarray) -> int:
        if self.size == self.data.shape[0]:
            self.data = np.vstack([self.data, np.zeros_like(self.data)])
        self.data[self.size] = v
        self.size += 1
        return self.size - 1

    @property
    def view(self) -> np.ndarray:
        return self.data[: self.size]

    def find_reducer(self, u: np.ndarray) -> tuple[int, int] | None:
        """Index and sign of some ``s*g`` with ``s*g`` sign-compatibly below ``u``."""
        G = self.view
        if not len(G):
            return None
        fits = np.all(np.abs(G) <= np.abs(u), axis=1)
        if not fits.any():
            return None
        prod = G * u
        plus = fits & np.all(prod >= 0, axis=1)
        idx = np.flatnonzero(plus)
        if idx.size:
            return int(idx[0]), 1
        minus = fits & np.all(prod <= 0, axis=1)
        idx = np.flatnonzero(minus)
        if idx.size:
            return int(idx[0]), -1
        return None

    def normal_form(self, u: np.ndarray) -> np.ndarray:
        u = u.copy()
        while u.any():
            hit = self.find_reducer(u)
            if hit is None:
                break
            i, s = hit
            u -= s * self.data[i]
        return u


def _primitive(v: np.ndarray) -> np.ndarray:
    g = _reduce(gcd, (int(x) for x in v), 0)
    return v // g if g > 1 else v


def graver_completion(
    basis,
    A=None,
    max_elements: int | None = None,
    max_degree: int | None = None,
) -> MoveSet:
    """Graver basis of the lattice spanned by ``basis`` by sign-compatible completion.

    Starting from the lattice basis, sums ``f + g`` and ``f - g`` of stored
    representatives are queued first in, first out; each is reduced by
    subtracting stored elements lying sign-compatibly below it, and any
    nonzero remainder is stored.  Pairs whose sum is itself a sign-compatible
    sum are skipped.  At the fixpoint the sign-compatibly minimal stored
    vectors are the Graver basis.

    Raises:
        BudgetExceeded: more than ``max_elements`` stored vectors, or a new
            vector above ``max_degree``.
    """
    max_elements = DEFAULT_MAX_ELEMENTS if max_elements is None else max_elements
    basis = [np.asarray(b, dtype=np.int64) for b in basis]
    basis = [b for b in basis if b.any()]
    if not basis:
        return make_moveset([], A)
    n = basis[0].shape[0]
    pool = _Pool(n)
    queue: deque[tuple[int, int, int]] = deque()

    def admit(v: np.ndarray) -> None:
        v = canonical_sign(_primitive(v))
        if max_degree is not None and degree(v) > max_degree:
            raise BudgetExceeded(
                f"completion budget exceeded: degree {degree(v)} > {max_degree}; import a basis instead"
            )
        if pool.size >= max_elements:
            raise BudgetExceeded(
                f"completion budget exceeded: more than {max_elements} elements; import a basis instead"
            )
        j = pool.add(v)
        G = pool.view
        prod = G[:j] * v
        for i in range(j):
            if np.any(prod[i] < 0):
                queue.append((i, j, 1))
            if np.any(prod[i] > 0):
                queue.append((i, j, -1))

    for b in basis:
        r = pool.normal_form(b)
        if r.any():
            admit(r)
    while queue:
        i, j, s = queue.popleft()
        cand = pool.data[i] + s * pool.data[j]
        r = pool.normal_form(cand)
        if r.any():
            admit(r)

    G = pool.view
    keep = []
    absG = np.abs(G)
    for i, u in enumerate(G):
        fits = np.all(absG <= absG[i], axis=1)
        fits[i] = False
        prod = G * u
        below = fits & (np.all(prod >= 0, axis=1) | np.all(prod <= 0, axis=1))
        if not below.any():
            keep.append(u)
    return make_moveset(keep, A)


def reduces_to_zero(z, moves: MoveSet) -> bool:
    """Whether ``z`` sign-compatibly reduces to 0 against ``moves``."""
    pool = _Pool(moves.length)
    for m in moves:
        pool.add(m)
    return not pool.normal_form(np.asarray(z, dtype=np.int64)).any()


def import_basis(text: str, A=None) -> MoveSet:
    """Parse a 4ti2 move listing (``count length`` then rows).

    Rows are sign-canonicalized and de-duplicated; with ``A`` given each row
    is checked to lie in its kernel.
    """
    if not text.strip():
        raise ParseError("empty basis file")
    rows = parse_matrix(text)
    if not rows:
        raise ParseError("basis file declares no moves")
    if A is not None:
        A = np.asarray(A, dtype=np.int64)
        if len(rows[0]) != A.shape[1]:
            raise ValidationError(f"moves have length {len(rows[0])}, matrix has {A.shape[1]} columns")
        arr = np.array(rows, dtype=np.int64)
        for r, z in enumerate(arr, start=1):
            if not z.any() or np.any(A @ z):
                raise InvalidMoveError(r)
    return make_moveset(rows, A, provenance="imported")


def load_basis(path, A=None) -> MoveSet:
    with open(path) as fh:
        return import_basis(fh.read(), A)


@dataclass
class ConnectivityReport:
    connected: bool
    n_points: int
    n_components: int
    labels: np.ndarray = field(repr=False)
    witness: tuple[np.ndarray, np.ndarray] | None = None


def fiber_components(fiber: Fiber, moves: MoveSet) -> np.ndarray:
    """Component label per fiber point under edges ``y <-> y + z``."""
    pts = np.ascontiguousarray(fiber.points, dtype=np.int64)
    npts = len(pts)
    parent = list(range(npts))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    index = fiber.index()
    for z in moves:
        for i in range(npts):
            nxt = pts[i] + z
            if nxt.min() < 0:
                continue
            j = index.get(nxt.tobytes())
            if j is not None:
                a, b = find(i), find(j)
                if a != b:
                    parent[a] = b
    roots = [find(i) for i in range(npts)]
    _, labels = np.unique(roots, return_inverse=True)
    return labels


def verify_connectivity(moves: MoveSet, A, t, upper=None, max_points: int | None = None) -> ConnectivityReport:
    """Enumerate the fiber of ``t`` and check that ``moves`` connect it."""
    fiber = enumerate_fiber(A, t, upper, max_points=max_points)
    labels = fiber_components(fiber, moves) if len(fiber) else np.zeros(0, dtype=np.int64)
    ncomp = int(labels.max()) + 1 if len(labels) else 0
    witness = None
    if ncomp > 1:
        a = int(np.flatnonzero(labels == 0)[0])
        b = int(np.flatnonzero(labels == 1)[0])
        witness = (fiber.points[a], fiber.points[b])
    return ConnectivityReport(ncomp <= 1, len(fiber), ncomp, labels, witness)


@dataclass
class SweepReport:
    """Connectivity of every fiber whose points have cell total at most ``total``."""

    total: int
    n_fibers: int
    n_points: int
    disconnected: list[tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]] = field(default_factory=list)

    @property
    def connected(self) -> bool:
        return not self.disconnected


def _compositions(total: int, k: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``k`` summing to ``total``."""
    from itertools import combinations

    bars = np.array(list(combinations(range(total + k - 1), k - 1)), dtype=np.int64).reshape(-1, k - 1)
    if k == 1:
        return np.full((1, 1), total, dtype=np.int64)
    edges = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), total + k - 1)])
    return np.diff(edges, axis=1) - 1


def verify_all_fibers(moves: MoveSet, A, total: int) -> SweepReport:
    """Exhaustive check over all nonnegative ``y`` with ``sum(y) <= total``.

    Points are grouped into fibers by ``A y``; each group is checked with
    union-find on the edges ``y <-> y + z``.  ``A`` should carry the
    intercept row so that every fiber lies within a single total.
    """
    A = np.asarray(A, dtype=np.int64)
    k = A.shape[1]
    report = SweepReport(total, 0, 0)
    for s in range(total + 1):
        pts = _compositions(s, k)
        stats = pts @ A.T
        order = np.lexsort(stats.T[::-1])
        pts, stats = pts[order], stats[order]
        breaks = np.flatnonzero(np.any(np.diff(stats, axis=0) != 0, axis=1)) + 1
        for grp in np.split(np.arange(len(pts)), breaks):
            fiber = Fiber(A, stats[grp[0]], None, pts[grp])
            labels = fiber_components(fiber, moves)
            report.n_fibers += 1
            report.n_points += len(grp)
            if labels.max() > 0:
                a = int(np.flatnonzero(labels == 0)[0])
                b = int(np.flatnonzero(labels == 1)[0])
                report.disconnected.append((stats[grp[0]], (fiber.points[a], fiber.points[b])))
    return report
