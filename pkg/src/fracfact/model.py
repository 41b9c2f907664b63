"""Covariate matrices for log-linear / logistic null models on a design."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .design import IDENTITY, DesignMatrix, Word, aliases, sorted_words
from .errors import AliasingError, ParseError, ValidationError


@dataclass(frozen=True)
class ModelSpec:
    """A set of non-identity effect words.

    With ``hierarchical=True`` the term set is closed under taking subwords,
    so ``AC/BD/E`` expands to ``A, B, C, D, E, AC, BD``.
    """

    terms: frozenset[Word]
    hierarchical: bool = True

    def __post_init__(self):
        terms = frozenset(self.terms)
        if IDENTITY in terms:
            raise ValidationError("the intercept is implicit; do not list I as a term")
        if self.hierarchical:
            closed = set()
            for t in terms:
                for r in range(1, len(t) + 1):
                    closed.update(Word(c) for c in itertools.combinations(t.letters, r))
            terms = frozenset(closed)
        object.__setattr__(self, "terms", terms)

    @classmethod
    def parse(cls, text: str, hierarchical: bool = True) -> "ModelSpec":
        text = text.strip()
        if not text:
            raise ParseError("empty model specification")
        parts = [s for s in (p.strip() for p in text.replace("+", "/").split("/")) if s]
        words = [Word.parse(s.strip("()")) for s in parts]
        return cls(frozenset(words), hierarchical)

    @property
    def ordered_terms(self) -> list[Word]:
        return sorted_words(self.terms)

    def generators(self) -> list[Word]:
        """Maximal terms, the slash notation of a hierarchical model."""
        ts = self.ordered_terms
        return [t for t in ts if not any(t != u and t.issubword(u) for u in ts)]

    def __str__(self) -> str:
        words = self.generators() if self.hierarchical else self.ordered_terms
        return "/".join(str(w) for w in words)


def parse_model(text: str, hierarchical: bool = True) -> ModelSpec:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if len(lines) != 1:
        raise ParseError(f"model file must hold exactly one line, found {len(lines)}")
    return ModelSpec.parse(lines[0], hierarchical)


def load_model(path: str | Path, hierarchical: bool = True) -> ModelSpec:
    return parse_model(Path(path).read_text(), hierarchical)


@dataclass(frozen=True)
class CovariateMatrix:
    """The k x nu matrix X0: intercept column then one +/-1 column per term."""

    entries: np.ndarray = field(repr=False)
    labels: tuple[Word, ...]

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    @property
    def nu(self) -> int:
        return self.entries.shape[1]

    @property
    def T(self) -> np.ndarray:
        return self.entries.T

    @property
    def df(self) -> int:
        return self.k - self.nu


def column_for_term(D: DesignMatrix, w: Word) -> np.ndarray:
    if w.is_identity:
        raise ValidationError("column_for_term needs a non-identity word")
    return D.column(w)


def build_covariate_matrix(D: DesignMatrix, model: ModelSpec) -> CovariateMatrix:
    """Assemble X0 with columns ordered by (word length, lexicographic).

    Raises:
        AliasingError: two terms share a column up to sign, or a term is
            aliased with the intercept.
    """
    terms = model.ordered_terms
    cols = [np.ones(D.k, dtype=np.int64)]
    seen = {cols[0].tobytes(): IDENTITY, (-cols[0]).tobytes(): IDENTITY}
    for t in terms:
        c = column_for_term(D, t)
        clash = seen.get(c.tobytes())
        if clash is not None:
            raise AliasingError(
                f"model inconsistent with aliasing relations: {t} is aliased with {clash}"
            )
        seen[c.tobytes()] = t
        seen[(-c).tobytes()] = t
        cols.append(c)
    entries = np.column_stack(cols)
    entries.setflags(write=False)
    return CovariateMatrix(entries, (IDENTITY, *terms))


@dataclass
class EstimabilityReport:
    k: int
    nu: int
    cosets: dict[Word, list[Word]]
    collisions: list[tuple[Word, Word]]
    saturated: bool
    overparameterized: bool

    @property
    def ok(self) -> bool:
        return not self.collisions and not self.overparameterized

    def lines(self) -> list[str]:
        out = [f"runs k = {self.k}, parameters nu = {self.nu}, residual df = {self.k - self.nu}"]
        for t, al in self.cosets.items():
            out.append(f"  {t} = " + " = ".join(str(a) for a in al) if al else f"  {t}")
        for a, b in self.collisions:
            out.append(f"  COLLISION: {a} and {b} are aliased")
        if self.saturated:
            out.append("  saturated: not testable")
        if self.overparameterized:
            out.append("  more parameters than runs")
        return out


def estimability_report(model: ModelSpec, subgroup: Iterable[Word], k: int | None = None) -> EstimabilityReport:
    """Alias cosets of each term plus any pairwise collisions.

    ``k`` defaults to ``2**p / |subgroup|`` worked out from the largest letter
    used; pass it explicitly when the model omits factors.
    """
    subgroup = frozenset(subgroup)
    terms = model.ordered_terms
    collisions = []
    for t in terms:
        if t in subgroup:
            collisions.append((IDENTITY, t))
    for a, b in itertools.combinations(terms, 2):
        if a * b in subgroup:
            collisions.append((a, b))
    if k is None:
        letters = [i for w in subgroup | set(terms) for i in w.letters]
        p = max(letters) + 1 if letters else 0
        k = 2**p // len(subgroup)
    nu = 1 + len(terms)
    return EstimabilityReport(
        k=k,
        nu=nu,
        cosets={t: aliases(t, subgroup) for t in terms},
        collisions=collisions,
        saturated=nu == k,
        overparameterized=nu > k,
    )


def lawrence_lift(X0t: np.ndarray) -> np.ndarray:
    """Block matrix ``[[X0', 0], [I_k, I_k]]`` for binomial fibers."""
    X0t = np.asarray(X0t, dtype=np.int64)
    nu, k = X0t.shape
    eye = np.eye(k, dtype=np.int64)
    return np.block([[X0t, np.zeros((nu, k), dtype=np.int64)], [eye, eye]])


def lift_counts(y, n) -> np.ndarray:
    """Binomial successes to the lifted vector ``(y, n - y)``."""
    y = np.asarray(y, dtype=np.int64)
    n = np.asarray(n, dtype=np.int64)
    if y.shape != n.shape:
        raise ValidationError("successes and denominators differ in length")
    if np.any(y < 0) or np.any(y > n):
        raise ValidationError("binomial counts must satisfy 0 <= y <= n")
    return np.concatenate([y, n - y])


def sufficient_statistic(X0: CovariateMatrix | np.ndarray, y, n=None) -> np.ndarray:
    """``X0' y``; with denominators, the lifted statistic ``(X0' y, n)``."""
    X = X0.entries if isinstance(X0, CovariateMatrix) else np.asarray(X0)
    y = np.asarray(y, dtype=np.int64)
    if y.shape[0] != X.shape[0]:
        raise ValidationError(f"expected {X.shape[0]} observations, got {y.shape[0]}")
    if n is None:
        return X.T @ y
    return lawrence_lift(X.T) @ lift_counts(y, n)
