"""Two-level fractional factorial designs and their aliasing structure.

Factors are named by capital letters, skipping ``I`` (reserved for the
identity word), so the ninth factor is ``J``.  Internally a factor is its
0-based position in that alphabet.

Levels are coded ``+1`` (level 1) and ``-1`` (level 2).  Runs are laid out in
Yates standard order over the basic factors: the first basic factor changes
slowest and the last fastest, and every factor starts at ``+1``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError

LETTERS = "ABCDEFGHJKLMNOPQRSTUVWXY"
MAX_FACTORS = len(LETTERS)


@dataclass(frozen=True, order=False)
class Word:
    """A product of factor letters, i.e. an effect such as ``ABDE``.

    ``letters`` holds sorted, duplicate-free 0-based factor indices; the empty
    tuple is the identity ``I``.  Multiplication is symmetric difference, so
    every word is its own inverse.
    """

    letters: tuple[int, ...] = ()

    def __post_init__(self):
        canon = tuple(sorted(set(self.letters)))
        if canon != self.letters:
            object.__setattr__(self, "letters", canon)
        if canon and (canon[0] < 0 or canon[-1] >= MAX_FACTORS):
            raise ValidationError(f"factor index out of range in {canon}")

    @classmethod
    def parse(cls, text: str) -> "Word":
        text = text.strip().upper()
        if text in ("", "I", "1"):
            return cls(())
        idx = []
        for ch in text:
            pos = LETTERS.find(ch)
            if pos < 0:
                raise ParseError(f"unknown factor letter {ch!r} in {text!r}")
            if pos in idx:
                raise ParseError(f"repeated letter {ch!r} in {text!r}")
            idx.append(pos)
        return cls(tuple(idx))

    @classmethod
    def of(cls, *letters: int) -> "Word":
        return cls(tuple(letters))

    def __mul__(self, other: "Word") -> "Word":
        return Word(tuple(set(self.letters) ^ set(other.letters)))

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __bool__(self) -> bool:
        # the identity is a valid word, not a falsy one
        return True

    @property
    def is_identity(self) -> bool:
        return not self.letters

    def sort_key(self) -> tuple:
        return (len(self.letters), self.letters)

    def __lt__(self, other: "Word") -> bool:
        return self.sort_key() < other.sort_key()

    def issubword(self, other: "Word") -> bool:
        return set(self.letters) <= set(other.letters)

    def __str__(self) -> str:
        if not self.letters:
            return "I"
        return "".join(LETTERS[i] for i in self.letters)

    def __repr__(self) -> str:
        return f"Word({str(self)!r})"


IDENTITY = Word(())


def sorted_words(words: Iterable[Word]) -> list[Word]:
    """Sort words by (length, lexicographic)."""
    return sorted(words, key=Word.sort_key)


@dataclass(frozen=True)
class DesignSpec:
    """A regular 2^(p-q) design given by generator relations.

    Each generator ``(j, w)`` reads "factor j = word w", where ``w`` uses only
    basic factors.  Factors never assigned by a generator are basic.
    """

    p: int
    generators: tuple[tuple[int, Word], ...] = ()

    def __post_init__(self):
        if not 1 <= self.p <= MAX_FACTORS:
            raise ValidationError(f"number of factors must be in 1..{MAX_FACTORS}, got {self.p}")
        generated = [j for j, _ in self.generators]
        if len(set(generated)) != len(generated):
            raise ValidationError("each generator must assign a distinct factor")
        for j, w in self.generators:
            if not 0 <= j < self.p:
                raise ValidationError(f"generated factor {LETTERS[j]} outside the {self.p} factors")
            if w.is_identity:
                raise ValidationError(f"generator for {LETTERS[j]} is the identity")
            bad = [i for i in w.letters if i >= self.p or i in generated]
            if bad:
                raise ValidationError(
                    f"generator {LETTERS[j]}={w} uses non-basic factor(s) "
                    + "".join(LETTERS[i] for i in bad if i < MAX_FACTORS)
                )
        if not self.basic:
            raise ValidationError("design needs at least one basic factor")

    @classmethod
    def from_relations(cls, p: int, relations: Sequence[str]) -> "DesignSpec":
        """Build from strings such as ``"E=ABD"``."""
        gens = []
        for rel in relations:
            if "=" not in rel:
                raise ParseError(f"generator must look like 'E=ABC', got {rel!r}")
            lhs, rhs = (s.strip().upper() for s in rel.split("=", 1))
            if len(lhs) != 1 or lhs not in LETTERS:
                raise ParseError(f"left side of {rel!r} must be a single factor letter")
            gens.append((LETTERS.index(lhs), Word.parse(rhs)))
        return cls(p, tuple(gens))

    @property
    def q(self) -> int:
        return len(self.generators)

    @property
    def k(self) -> int:
        return 2 ** (self.p - self.q)

    @property
    def basic(self) -> tuple[int, ...]:
        generated = {j for j, _ in self.generators}
        return tuple(i for i in range(self.p) if i not in generated)

    @property
    def defining_words(self) -> list[Word]:
        return [w * Word.of(j) for j, w in self.generators]

    @property
    def factor_names(self) -> list[str]:
        return [LETTERS[i] for i in range(self.p)]

    def relations(self) -> list[str]:
        return [f"{LETTERS[j]}={w}" for j, w in self.generators]


def parse_design(text: str) -> DesignSpec:
    """Parse the design file format: ``p q`` then ``q`` lines ``X=WORD``."""
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ParseError("empty design file")
    head = lines[0].split()
    try:
        p, q = int(head[0]), int(head[1])
    except (IndexError, ValueError):
        raise ParseError(f"design header must be 'p q', got {lines[0]!r}") from None
    if len(head) != 2:
        raise ParseError(f"design header must be 'p q', got {lines[0]!r}")
    rels = lines[1:]
    if len(rels) != q:
        raise ParseError(f"header declares {q} generators but {len(rels)} found")
    return DesignSpec.from_relations(p, rels)


def load_design(path: str | Path) -> DesignSpec:
    return parse_design(Path(path).read_text())


def format_design(spec: DesignSpec) -> str:
    return "\n".join([f"{spec.p} {spec.q}", *spec.relations()]) + "\n"


def defining_subgroup(words: Iterable[Word]) -> frozenset[Word]:
    """Multiplicative closure of independent defining words (includes I)."""
    words = list(words)
    group = {IDENTITY}
    for w in words:
        group |= {g * w for g in group}
    if len(group) != 2 ** len(words):
        raise ValidationError("rank-deficient generators")
    return frozenset(group)


def expand_defining_contrast(spec: DesignSpec | Iterable[Word]) -> frozenset[Word]:
    """The defining contrast subgroup of a design (size 2^q, contains I)."""
    if isinstance(spec, DesignSpec):
        return defining_subgroup(spec.defining_words)
    return defining_subgroup(spec)


def aliases(w: Word, subgroup: Iterable[Word]) -> list[Word]:
    """Words aliased with ``w``: the coset ``w * subgroup`` without ``w``."""
    return sorted_words({w * g for g in subgroup} - {w})


def resolution(subgroup: Iterable[Word]) -> int | None:
    """Shortest non-identity word length; ``None`` for a full factorial."""
    lengths = [len(w) for w in subgroup if not w.is_identity]
    return min(lengths) if lengths else None


def roman(n: int | None) -> str:
    if n is None:
        return "full"
    table = [(10, "X"), (9, "IX"), (5, "V"), (4, "IV"), (1, "I")]
    out = ""
    for value, sym in table:
        while n >= value:
            out += sym
            n -= value
    return out


def alias_table(subgroup: Iterable[Word], p: int, max_len: int = 4) -> list[list[Word]]:
    """Alias cosets of all 2^p words, each truncated to words of length <= max_len.

    The first row is the subgroup itself.  Rows are ordered by their shortest
    member; cosets with no member short enough are dropped.
    """
    subgroup = frozenset(subgroup)
    seen: set[Word] = set()
    rows = []
    for r in range(p + 1):
        for combo in itertools.combinations(range(p), r):
            w = Word(combo)
            if w in seen:
                continue
            coset = {w * g for g in subgroup}
            seen |= coset
            shown = [c for c in sorted_words(coset) if len(c) <= max_len]
            if shown:
                rows.append(shown)
    return rows


@dataclass(frozen=True)
class DesignMatrix:
    """The k x p matrix of +/-1 levels, rows in Yates order."""

    spec: DesignSpec
    entries: np.ndarray = field(repr=False)

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    @property
    def p(self) -> int:
        return self.entries.shape[1]

    def column(self, w: Word) -> np.ndarray:
        """Entrywise product of the columns named by ``w`` (all ones for I)."""
        if w.letters and w.letters[-1] >= self.p:
            raise ValidationError(f"word {w} uses a factor outside the design")
        out = np.ones(self.k, dtype=np.int64)
        for j in w.letters:
            out = out * self.entries[:, j]
        return out

    def as_levels(self) -> np.ndarray:
        """Recode +1/-1 back to the 1/2 level labels used in design tables."""
        return np.where(self.entries > 0, 1, 2)


def build_design_matrix(spec: DesignSpec) -> DesignMatrix:
    basic = spec.basic
    runs = np.array(list(itertools.product((1, -1), repeat=len(basic))), dtype=np.int64)
    runs = runs.reshape(spec.k, len(basic))
    entries = np.zeros((spec.k, spec.p), dtype=np.int64)
    for pos, j in enumerate(basic):
        entries[:, j] = runs[:, pos]
    for j, w in spec.generators:
        entries[:, j] = reduce(np.multiply, (entries[:, i] for i in w.letters))
    entries.setflags(write=False)
    return DesignMatrix(spec, entries)


def match_rows(matrix: np.ndarray, reference: np.ndarray) -> list[int] | None:
    """Row permutation ``perm`` with ``matrix[perm[i]] == reference[i]``, if any."""
    matrix = np.asarray(matrix)
    reference = np.asarray(reference)
    if matrix.shape != reference.shape:
        return None
    index: dict[bytes, list[int]] = {}
    for i, row in enumerate(matrix):
        index.setdefault(row.tobytes(), []).append(i)
    perm = []
    for row in reference:
        bucket = index.get(np.ascontiguousarray(row, dtype=matrix.dtype).tobytes())
        if not bucket:
            return None
        perm.append(bucket.pop(0))
    return perm
