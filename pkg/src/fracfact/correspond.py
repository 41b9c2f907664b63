"""Contingency-table models whose sufficient statistics match a design's null model.

Runs of a ``2^(p-q)`` design are read as cells of a ``2^m`` table over the
basic factors (``m = p - q``), in lexicographic order with axis 1 slowest
and level 1 standing for the +1 level.  For binomial data the lifted vector
``(y, n - y)`` adds one more axis, the success/failure split.

A table model is a hierarchical part (margins) plus optional extra
contrasts.  An extra contrast ``(W|S)`` contributes one indicator row per
sign of the word ``W`` and per level of the axes ``S``; ``(W)`` has no
``S``.  Two statistics correspond when their row spaces over the rationals
coincide.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable

import networkx as nx
import numpy as np

from .design import LETTERS, DesignSpec, Word, aliases, build_design_matrix, expand_defining_contrast
from .errors import ParseError, ValidationError
from .lattice import rational_rank
from .model import ModelSpec, build_covariate_matrix, lawrence_lift
from .moves import MoveSet, make_moveset

MAX_SEARCH_AXES = 4

Axes = tuple[int, ...]


def _axes_str(axes: Iterable[int]) -> str:
    return "".join(LETTERS[a] for a in axes)


def _parse_axes(text: str, m: int) -> Axes:
    try:
        axes = tuple(sorted(LETTERS.index(c) for c in text.strip().upper()))
    except ValueError:
        raise ParseError(f"unknown axis letter in {text!r}") from None
    if len(set(axes)) != len(axes) or any(a >= m for a in axes):
        raise ParseError(f"bad axis set {text!r} for a 2^{m} table")
    return axes


@dataclass(frozen=True)
class TableModel:
    """Margins (a hierarchical model) plus extra contrasts ``(word, by)``."""

    m: int
    margins: tuple[Axes, ...]
    extras: tuple[tuple[Axes, Axes], ...] = ()

    def __post_init__(self):
        margins = tuple(sorted({tuple(sorted(g)) for g in self.margins}, key=lambda g: (-len(g), g)))
        for g in margins:
            if any(a < 0 or a >= self.m for a in g):
                raise ValidationError(f"margin {g} outside axes 0..{self.m - 1}")
        for w, by in self.extras:
            if not w or set(w) & set(by):
                raise ValidationError("extra contrast needs a nonempty word disjoint from its by-axes")
        object.__setattr__(self, "margins", margins)
        object.__setattr__(self, "extras", tuple((tuple(sorted(w)), tuple(sorted(b))) for w, b in self.extras))

    @classmethod
    def parse(cls, text: str, m: int) -> "TableModel":
        """``"AB/AC + (ABC) + (ABC|D)"``."""
        parts = [s.strip() for s in text.split("+")]
        margins: list[Axes] = []
        extras = []
        for part in parts:
            if not part:
                raise ParseError(f"empty term in {text!r}")
            if part.startswith("("):
                inner = part.strip("()")
                w, _, by = inner.partition("|")
                extras.append((_parse_axes(w, m), _parse_axes(by, m) if by else ()))
            else:
                margins.extend(_parse_axes(g, m) for g in part.split("/") if g.strip())
        return cls(m, tuple(margins), tuple(extras))

    @property
    def is_hierarchical(self) -> bool:
        return not self.extras

    def __str__(self) -> str:
        s = "/".join(_axes_str(g) for g in self.margins) if self.margins else "(empty)"
        for w, by in self.extras:
            s += f" + ({_axes_str(w)}" + (f"|{_axes_str(by)})" if by else ")")
        return s


def cell_levels(m: int) -> np.ndarray:
    """``2^m x m`` array of 0/1 level indices (0 is level 1) in lexicographic order."""
    return np.array(list(itertools.product((0, 1), repeat=m)), dtype=np.int64).reshape(-1, m)


def _margin_rows(levels: np.ndarray, axes: Axes) -> list[np.ndarray]:
    if not axes:
        return [np.ones(len(levels), dtype=np.int64)]
    sub = levels[:, list(axes)]
    return [np.all(sub == combo, axis=1).astype(np.int64) for combo in itertools.product((0, 1), repeat=len(axes))]


def _contrast_rows(levels: np.ndarray, word: Axes, by: Axes) -> list[np.ndarray]:
    sign = (levels[:, list(word)].sum(axis=1) % 2 == 0)
    rows = []
    for group in _margin_rows(levels, by):
        for s in (True, False):
            rows.append(((sign == s) & (group == 1)).astype(np.int64))
    return rows


def table_model_matrix(tm: TableModel) -> np.ndarray:
    """Rows: margin-cell indicators, then the extra-contrast indicator rows."""
    levels = cell_levels(tm.m)
    rows = []
    for g in tm.margins:
        rows.extend(_margin_rows(levels, g))
    for w, by in tm.extras:
        rows.extend(_contrast_rows(levels, w, by))
    if not rows:
        return np.zeros((0, 2**tm.m), dtype=np.int64)
    return np.array(rows, dtype=np.int64)


def _rank(M) -> int:
    M = np.asarray(M)
    return rational_rank(M.tolist()) if M.size else 0


def row_space_contains(A, B) -> bool:
    """Whether every row of ``B`` lies in the rational row space of ``A``."""
    A, B = np.asarray(A), np.asarray(B)
    if not B.size:
        return True
    return _rank(np.vstack([A, B])) == _rank(A)


def equivalent_sufficient_statistics(A, B) -> bool:
    """Equal rational row spaces, so each statistic is a linear function of the other."""
    A, B = np.asarray(A), np.asarray(B)
    if A.shape[1] != B.shape[1]:
        raise ValidationError("matrices must have the same number of columns")
    ra, rb = _rank(A), _rank(B)
    return ra == rb and _rank(np.vstack([A, B])) == ra


def hierarchical_models(m: int) -> list[TableModel]:
    """Every nonempty antichain of subsets of the ``m`` axes, as margins."""
    if m > MAX_SEARCH_AXES:
        raise ValidationError(f"hierarchical search is limited to tables with at most {MAX_SEARCH_AXES} axes")
    subsets = [s for r in range(m, -1, -1) for s in itertools.combinations(range(m), r)]
    found: list[tuple[Axes, ...]] = []

    def grow(start: int, chosen: list[Axes]) -> None:
        if chosen:
            found.append(tuple(chosen))
        for i in range(start, len(subsets)):
            s = subsets[i]
            # subsets are visited by decreasing size, so only containment in a chosen set can clash
            if any(set(s) <= set(c) for c in chosen):
                continue
            chosen.append(s)
            grow(i + 1, chosen)
            chosen.pop()

    grow(0, [])
    return [TableModel(m, a) for a in found]


def design_table_matrix(spec: DesignSpec, model: ModelSpec, family: str = "poisson") -> tuple[np.ndarray, int]:
    """The statistic matrix of the null model, columns reordered to table cells.

    Poisson: ``X0'`` with ``m = p - q`` axes.  Binomial: the lifted matrix on
    ``m + 1`` axes, the last axis being the success/failure split.
    """
    m = spec.p - spec.q
    if spec.basic != tuple(range(m)):
        raise ValidationError("table axes need the basic factors to be the first p - q letters")
    X0t = build_covariate_matrix(build_design_matrix(spec), model).entries.T
    if family == "poisson":
        return X0t, m
    if family != "binomial":
        raise ValidationError(f"unknown family {family!r}")
    L = lawrence_lift(X0t)
    k = spec.k
    # table cell (run, l) sits at lifted position l * k + run
    perm = [l * k + run for run in range(k) for l in (0, 1)]
    return L[:, perm], m + 1


@dataclass
class CorrespondenceReport:
    m: int
    hierarchical: TableModel | None
    match: TableModel | None
    contained: TableModel | None = field(default=None, repr=False)

    @property
    def verdict(self) -> str:
        if self.hierarchical is not None:
            return f"corresponds to hierarchical model {self.hierarchical}"
        if self.match is not None:
            return f"no hierarchical correspondent; matches {self.match}"
        return "no hierarchical correspondent"


def _extra_candidates(m: int) -> list[tuple[Axes, Axes]]:
    out = []
    for r in range(1, m + 1):
        for w in itertools.combinations(range(m), r):
            rest = [a for a in range(m) if a not in w]
            for s in range(len(rest) + 1):
                for by in itertools.combinations(rest, s):
                    out.append((w, by))
    out.sort(key=lambda c: (len(c[0]) + len(c[1]), -len(c[0]), c))
    return out


def correspondence_report(A, m: int) -> CorrespondenceReport:
    """Search the hierarchical models on ``m`` axes for one matching ``A``.

    Failing an exact match, the largest hierarchical model inside the row
    space of ``A`` is extended greedily by extra contrasts until the row
    spaces agree.
    """
    A = np.asarray(A, dtype=np.int64)
    if A.shape[1] != 2**m:
        raise ValidationError(f"matrix has {A.shape[1]} columns, a 2^{m} table has {2**m} cells")
    rank_a = _rank(A)
    levels = cell_levels(m)
    contained = [
        s for r in range(m + 1) for s in itertools.combinations(range(m), r)
        if row_space_contains(A, np.array(_margin_rows(levels, s)))
    ]
    maximal = tuple(s for s in contained if not any(set(s) < set(t) for t in contained))
    base = TableModel(m, maximal)
    B = table_model_matrix(base)
    if _rank(B) == rank_a:
        return CorrespondenceReport(m, base, base, base)
    extras = []
    rank_b = _rank(B)
    for w, by in _extra_candidates(m):
        rows = np.array(_contrast_rows(levels, w, by))
        if not row_space_contains(A, rows):
            continue
        cand = np.vstack([B, rows])
        rc = _rank(cand)
        if rc > rank_b:
            B, rank_b = cand, rc
            extras.append((w, by))
            if rank_b == rank_a:
                break
    match = TableModel(m, maximal, tuple(extras)) if rank_b == rank_a else None
    return CorrespondenceReport(m, None, match, base)


def no_hierarchical_correspondent(A, m: int) -> bool:
    """Exhaustive check that no hierarchical model on ``m`` axes matches ``A``."""
    return not any(equivalent_sufficient_statistics(A, table_model_matrix(h)) for h in hierarchical_models(m))


# -- decomposable models -------------------------------------------------------


def interaction_graph(tm: TableModel) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(range(tm.m))
    for margin in tm.margins:
        g.add_edges_from(itertools.combinations(margin, 2))
    return g


def is_decomposable(tm: TableModel) -> bool:
    if tm.extras:
        return False
    if set().union(*map(set, tm.margins)) != set(range(tm.m)):
        return False
    g = interaction_graph(tm)
    if not nx.is_chordal(g):
        return False
    cliques = {frozenset(c) for c in nx.find_cliques(g)}
    return cliques == {frozenset(c) for c in tm.margins}


def primitive_moves_for_decomposable(tm: TableModel) -> MoveSet:
    """Degree-2 moves from every separator of a junction tree.

    For a tree edge with separator ``S`` splitting the axes into ``U`` and
    ``V`` (beyond ``S``), each level ``s`` of ``S`` and each pair of
    distinct levels ``u, u'`` and ``v, v'`` gives
    ``(u v s)(u' v' s) - (u v' s)(u' v s)``.
    """
    if not is_decomposable(tm):
        raise ValidationError(f"model {tm} is not decomposable graphical")
    m = tm.m
    cliques = [frozenset(c) for c in tm.margins]
    tree = nx.Graph()
    tree.add_nodes_from(range(len(cliques)))
    for i, j in itertools.combinations(range(len(cliques)), 2):
        tree.add_edge(i, j, weight=len(cliques[i] & cliques[j]))
    tree = nx.maximum_spanning_tree(tree)
    index = {tuple(c): n for n, c in enumerate(cell_levels(m).tolist())}
    moves = []
    for i, j in tree.edges():
        sep = cliques[i] & cliques[j]
        cut = tree.copy()
        cut.remove_edge(i, j)
        side = nx.node_connected_component(cut, i)
        U = sorted(set().union(*(cliques[c] for c in side)) - sep)
        V = sorted(set(range(m)) - set(U) - sep)
        S = sorted(sep)
        for s in itertools.product((0, 1), repeat=len(S)):
            for u, u2 in itertools.combinations(list(itertools.product((0, 1), repeat=len(U))), 2):
                for v, v2 in itertools.combinations(list(itertools.product((0, 1), repeat=len(V))), 2):
                    z = np.zeros(2**m, dtype=np.int64)
                    for uu, vv, sign in ((u, v, 1), (u2, v2, 1), (u, v2, -1), (u2, v, -1)):
                        cell = [0] * m
                        for a, x in zip(U, uu):
                            cell[a] = x
                        for a, x in zip(V, vv):
                            cell[a] = x
                        for a, x in zip(S, s):
                            cell[a] = x
                        z[index[tuple(cell)]] += sign
                    moves.append(z)
    return make_moveset(moves, table_model_matrix(tm), provenance="computed")


def format_move(z, m: int) -> str:
    """``(111)(122)-(112)(121)`` notation for a degree-2 move."""
    levels = cell_levels(m) + 1
    z = np.asarray(z)
    plus = [i for i in np.flatnonzero(z > 0) for _ in range(z[i])]
    minus = [i for i in np.flatnonzero(z < 0) for _ in range(-z[i])]
    cell = lambda i: "(" + "".join(str(x) for x in levels[i]) + ")"  # noqa: E731
    return "".join(map(cell, plus)) + "-" + "".join(map(cell, minus))


# -- alias substitutions ------------------------------------------------------


def alias_substitutions(model: ModelSpec, spec: DesignSpec, max_len: int = 2) -> list[frozenset[Word]]:
    """Term sets reachable by swapping each term for an alias of length <= ``max_len``.

    All of them share the column space of the original model.
    """
    subgroup = expand_defining_contrast(spec)
    options = []
    for t in model.ordered_terms:
        coset = [t, *aliases(t, subgroup)]
        opts = sorted({a for a in coset if 1 <= len(a) <= max_len} | {t})
        options.append(opts)
    return sorted({frozenset(choice) for choice in itertools.product(*options)}, key=lambda s: sorted(s))
