"""Regenerate the bundled minimal Markov bases for the wave-solder null model.

A minimal Markov basis is assembled fiber by fiber.  Every degree at which
minimal moves live is the fiber of ``A g+`` for some Graver move ``g``;
within such a fiber two points are joined when their supports meet (their
difference then factors through a smaller fiber), and one move per extra
component is needed.  Components are bridged with differences of
representatives, starting with the three rows of the reference listing
whenever they lie in the kernel, so those rows come out verbatim.

Usage:
    python3 tools/make_wavesolder_basis.py                 # design-derived X0'
    python3 tools/make_wavesolder_basis.py --matrix src/fracfact/data/wavesolder_printed.mat \\
        --out src/fracfact/data/wavesolder_printed.mar
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from fracfact.design import load_design, build_design_matrix
from fracfact.fiber import enumerate_fiber
from fracfact.lattice import format_matrix, kernel_basis, parse_matrix
from fracfact.model import build_covariate_matrix, load_model
from fracfact.moves import graver_completion, import_basis

DATA = Path(__file__).resolve().parents[1] / "src" / "fracfact" / "data"

REFERENCE = [
    [-1, -1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, -1, -1],
    [-1, -1, 0, 1, 1, 1, -1, 0, 0, 0, 1, 0, 0, 0, 0, -1],
    [-1, -1, 1, 0, 1, 1, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0],
]


def support_components(points: np.ndarray) -> list[int]:
    parent = list(range(len(points)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    supp = points > 0
    for i in range(len(points)):
        for j in np.flatnonzero((supp[i] & supp[i + 1:]).any(axis=1)) + i + 1:
            parent[find(i)] = find(int(j))
    return [find(i) for i in range(len(points))]


def minimal_basis(A: np.ndarray, preferred) -> list[np.ndarray]:
    graver = graver_completion(kernel_basis(A), A)
    fibers = {}
    for g in graver:
        t = A @ np.maximum(g, 0)
        fibers.setdefault(t.tobytes(), t)
    preferred = [np.array(z) for z in preferred if not np.any(A @ np.array(z))]

    first, rest = [], []
    for t in sorted(fibers.values(), key=lambda v: v.tolist()):
        fib = enumerate_fiber(A, t)
        pts = fib.points
        roots = support_components(pts)
        if len(set(roots)) == 1:
            continue
        index = fib.index()
        link = {r: r for r in set(roots)}

        def top(r):
            while link[r] != r:
                r = link[r]
            return r

        for z in preferred:
            plus, minus = np.maximum(z, 0), np.maximum(-z, 0)
            if not np.array_equal(A @ plus, t):
                continue
            a, b = top(roots[index[plus.tobytes()]]), top(roots[index[minus.tobytes()]])
            if a != b:
                link[a] = b
                first.append(z)
        reps = {}
        for i, r in enumerate(roots):
            reps.setdefault(r, i)
        order = sorted(reps.values())
        for i in order[1:]:
            a, b = top(roots[order[0]]), top(roots[i])
            if a != b:
                link[b] = a
                rest.append(pts[order[0]] - pts[i])
    key = {tuple(z): n for n, z in enumerate(preferred)}
    first.sort(key=lambda z: key[tuple(z)])
    return first + rest


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--matrix", help="4ti2 matrix file; default builds X0' from the bundled design/model")
    ap.add_argument("--out", default=str(DATA / "wavesolder.mar"))
    args = ap.parse_args(argv)
    if args.matrix:
        A = np.array(parse_matrix(Path(args.matrix).read_text()), dtype=np.int64)
    else:
        D = build_design_matrix(load_design(DATA / "wavesolder.design"))
        A = build_covariate_matrix(D, load_model(DATA / "wavesolder.model")).entries.T
    moves = minimal_basis(A, REFERENCE)
    text = format_matrix(moves)
    ms = import_basis(text, A)
    Path(args.out).write_text(text)
    print(f"{len(ms)} moves -> {args.out}", file=sys.stderr)


if __name__ == "__main__":
    main()
