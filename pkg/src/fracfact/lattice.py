"""Exact integer linear algebra on Python ints.

Matrices are lists of lists of ``int``; numpy integer arrays are accepted on
input and converted.  Nothing here touches floating point.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

IntMatrix = list[list[int]]


def as_int_matrix(A) -> IntMatrix:
    rows = [[int(x) for x in row] for row in A]
    if rows and any(len(r) != len(rows[0]) for r in rows):
        raise ValueError("ragged matrix")
    return rows


def identity(n: int) -> IntMatrix:
    return [[int(i == j) for j in range(n)] for i in range(n)]


def matmul(A: IntMatrix, B: IntMatrix) -> IntMatrix:
    Bt = list(zip(*B)) if B else []
    return [[sum(a * b for a, b in zip(row, col)) for col in Bt] for row in A]


def matvec(A: IntMatrix, v: Sequence[int]) -> list[int]:
    return [sum(int(a) * int(b) for a, b in zip(row, v)) for row in A]


def _xgcd(a: int, b: int) -> tuple[int, int, int]:
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return x0, y0, a


def hermite_normal_form(A) -> tuple[IntMatrix, IntMatrix]:
    """Row-style Hermite normal form.

    Returns ``(H, U)`` with ``U @ A == H`` and ``U`` unimodular.  ``H`` is in
    row echelon form, every pivot is positive, and entries above a pivot lie
    in ``[0, pivot)``.  Zero rows of ``H`` come last.
    """
    H = as_int_matrix(A)
    m = len(H)
    n = len(H[0]) if m else 0
    U = identity(m)
    r = 0
    for c in range(n):
        if r == m:
            break
        # fold every lower row into row r with gcd steps
        for i in range(r + 1, m):
            if H[i][c] == 0:
                continue
            a, b = H[r][c], H[i][c]
            x, y, g = _xgcd(a, b)
            # [[x, y], [-b/g, a/g]] has determinant 1
            bg, ag = b // g, a // g
            Hr, Hi = H[r], H[i]
            H[r] = [x * u + y * v for u, v in zip(Hr, Hi)]
            H[i] = [-bg * u + ag * v for u, v in zip(Hr, Hi)]
            Ur, Ui = U[r], U[i]
            U[r] = [x * u + y * v for u, v in zip(Ur, Ui)]
            U[i] = [-bg * u + ag * v for u, v in zip(Ur, Ui)]
        if H[r][c] == 0:
            continue
        if H[r][c] < 0:
            H[r] = [-v for v in H[r]]
            U[r] = [-v for v in U[r]]
        piv = H[r][c]
        for i in range(r):
            q = H[i][c] // piv
            if q:
                H[i] = [u - q * v for u, v in zip(H[i], H[r])]
                U[i] = [u - q * v for u, v in zip(U[i], U[r])]
        r += 1
    return H, U


def rank(A) -> int:
    H, _ = hermite_normal_form(A)
    return sum(1 for row in H if any(row))


def rational_rank(A) -> int:
    """Rank by fraction-exact Gaussian elimination (independent of the HNF path)."""
    M = [[Fraction(int(x)) for x in row] for row in A]
    if not M:
        return 0
    rk = 0
    ncols = len(M[0])
    for c in range(ncols):
        piv = next((i for i in range(rk, len(M)) if M[i][c] != 0), None)
        if piv is None:
            continue
        M[rk], M[piv] = M[piv], M[rk]
        for i in range(len(M)):
            if i != rk and M[i][c] != 0:
                f = M[i][c] / M[rk][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[rk])]
        rk += 1
        if rk == len(M):
            break
    return rk


def _size_reduce(basis: list[list[int]]) -> list[list[int]]:
    """Greedy pairwise size reduction: subtract rounded multiples while the norm drops."""
    basis = [list(b) for b in basis]
    norm = lambda v: sum(x * x for x in v)  # noqa: E731
    changed = True
    while changed:
        changed = False
        for i in range(len(basis)):
            for j in range(len(basis)):
                if i == j:
                    continue
                bj = basis[j]
                nj = norm(bj)
                if nj == 0:
                    continue
                dot = sum(a * b for a, b in zip(basis[i], bj))
                q = round(Fraction(dot, nj))
                if q == 0:
                    continue
                cand = [a - q * b for a, b in zip(basis[i], bj)]
                if norm(cand) < norm(basis[i]):
                    basis[i] = cand
                    changed = True
    return basis


def kernel_basis(A, reduce: bool = True) -> list[list[int]]:
    """Lattice basis of ``{z in Z^n : A z = 0}``.

    Takes the HNF of ``A'``; the rows of the transform that hit zero rows of
    the echelon form span the (saturated) integer kernel.
    """
    A = as_int_matrix(A)
    if not A:
        raise ValueError("kernel_basis needs at least one row")
    At = [list(col) for col in zip(*A)]
    H, U = hermite_normal_form(At)
    basis = [U[i] for i, row in enumerate(H) if not any(row)]
    if reduce and basis:
        basis = _size_reduce(basis)
    return basis


def solve_in_lattice(basis: list[list[int]], v: Sequence[int]) -> list[int] | None:
    """Integer coefficients ``c`` with ``sum c_i basis_i == v``, or None."""
    if not basis:
        return [] if not any(v) else None
    # rows of H span the same lattice as the basis; U tracks the change
    H, U = hermite_normal_form(basis)
    v = [int(x) for x in v]
    coeffs = [0] * len(H)
    rem = list(v)
    for i, row in enumerate(H):
        if not any(row):
            break
        c = next(j for j, x in enumerate(row) if x)
        if rem[c] % row[c]:
            return None
        q = rem[c] // row[c]
        coeffs[i] = q
        rem = [a - q * b for a, b in zip(rem, row)]
    if any(rem):
        return None
    # v = coeffs @ H = coeffs @ U @ basis
    return [sum(coeffs[i] * U[i][j] for i in range(len(H))) for j in range(len(basis))]


def format_matrix(A) -> str:
    """4ti2-style text: ``rows cols`` then one whitespace-separated row per line."""
    A = as_int_matrix(A)
    ncols = len(A[0]) if A else 0
    width = max((len(str(x)) for row in A for x in row), default=1)
    lines = [f"{len(A)} {ncols}"]
    lines += [" ".join(str(x).rjust(width) for x in row) for row in A]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> IntMatrix:
    from .errors import ParseError

    tokens = text.split()
    if len(tokens) < 2:
        raise ParseError("matrix file must start with 'rows cols'")
    try:
        nums = [int(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(f"non-integer entry in matrix file: {exc}") from None
    rows, cols = nums[0], nums[1]
    if rows < 0 or cols < 0:
        raise ParseError("negative matrix dimensions")
    body = nums[2:]
    if len(body) != rows * cols:
        raise ParseError(f"header declares {rows}x{cols} = {rows * cols} entries, found {len(body)}")
    return [body[i * cols:(i + 1) * cols] for i in range(rows)]
