"""Markov chain Monte Carlo estimate of the exact conditional p-value.

The chain walks the fiber one move at a time: a move ``z`` is drawn
uniformly, the integer line ``{y + n z}`` is cut down to its nonnegative
(and bounded) part, and the next state is drawn from the conditional
distribution restricted to that line.  Binomial data are handled on the
lifted vector ``(y, n - y)``, where the conditional weight ``prod 1/y_i!``
is exactly the binomial kernel.

Randomness: two uniforms per step, drawn in order from a numpy ``PCG64``
stream seeded by ``SeedSequence(seed)``.  Parallel chains use
``SeedSequence(seed).spawn(chains)``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np
from scipy.special import gammaln

from .errors import ValidationError
from .fiber import TIE_RTOL, _cell_upper_bounds
from .glm import chisq_pdf, chisq_upper_tail, fit
from .model import lift_counts
from .moves import MoveSet

CHUNK = 1 << 16
DEBUG_EVERY = 10_000
_BIG = np.iinfo(np.int64).max // 4

STATISTICS = ("deviance", "pearson")


@dataclass(frozen=True)
class ChainConfig:
    seed: int = 0
    burn_in: int = 100_000
    samples: int = 1_000_000
    batches: int = 100
    family: str = "poisson"
    statistic: str = "deviance"
    chains: int = 1
    debug: bool = False
    record_states: bool = False

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.burn_in < 0:
            raise ValidationError("burn-in must be nonnegative")
        if self.batches < 2 or self.samples < self.batches:
            raise ValidationError("need samples >= batches >= 2")
        if self.family not in ("poisson", "binomial"):
            raise ValidationError(f"unknown family {self.family!r}")
        if self.statistic not in STATISTICS:
            raise ValidationError(f"unknown statistic {self.statistic!r}; choose from {STATISTICS}")
        if self.chains < 1 or self.batches % self.chains:
            raise ValidationError("chains must be a positive divisor of batches")


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    chisq_density: np.ndarray

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def rows(self) -> list[tuple[float, float, float, int, float, float]]:
        total = self.counts.sum()
        widths = np.diff(self.edges)
        dens = np.where(widths > 0, self.counts / (total * np.where(widths > 0, widths, 1.0)), 0.0)
        return [
            (float(a), float(b), float(m), int(c), float(d), float(f))
            for a, b, m, c, d, f in zip(
                self.edges[:-1], self.edges[1:], self.midpoints, self.counts, dens, self.chisq_density
            )
        ]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "midpoint", "count", "density", "chisq_density"])
            for row in self.rows():
                w.writerow([repr(x) if isinstance(x, float) else x for x in row])


@dataclass
class TestResult:
    __test__ = False  # not a pytest class

    t_obs: float
    df: int
    p_mcmc: float
    se_batch: float
    p_asymptotic: float
    histogram: Histogram = field(repr=False)
    multi_step_fraction: float
    samples: int
    burn_in: int
    batch_means: np.ndarray = field(repr=False)
    cell_min: np.ndarray = field(repr=False)
    cell_max: np.ndarray = field(repr=False)
    statistic: str = "deviance"
    family: str = "poisson"
    states: np.ndarray | None = field(default=None, repr=False)
    values: np.ndarray | None = field(default=None, repr=False)


# -- line geometry and the single Gibbs step ---------------------------------


def feasible_range(y, z, upper=None) -> tuple[int, int]:
    """Integers ``n`` with ``0 <= y + n z (<= upper)``, as ``(lo, hi)``; contains 0."""
    y = np.asarray(y, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    lo, hi = -_BIG, _BIG
    for i in np.flatnonzero(z):
        yi, zi = int(y[i]), int(z[i])
        ub = None if upper is None else int(upper[i])
        if zi > 0:
            lo = max(lo, -(yi // zi))
            if ub is not None:
                hi = min(hi, (ub - yi) // zi)
        else:
            hi = min(hi, yi // -zi)
            if ub is not None:
                lo = max(lo, -((ub - yi) // -zi))
    if lo == -_BIG and hi == _BIG:
        raise ValidationError("zero move has an unbounded line")
    return lo, hi


def line_probabilities(y, z, upper=None) -> tuple[np.ndarray, np.ndarray]:
    """Multipliers ``n`` on the feasible line and their conditional probabilities."""
    lo, hi = feasible_range(y, z, upper)
    ns = np.arange(lo, hi + 1)
    pts = np.asarray(y, dtype=np.int64)[None, :] + ns[:, None] * np.asarray(z, dtype=np.int64)[None, :]
    lw = -gammaln(pts + 1.0).sum(axis=1)
    lw -= lw.max()
    w = np.exp(lw)
    return ns, w / w.sum()


def gibbs_step(y, z, rng: np.random.Generator, upper=None) -> np.ndarray:
    """Draw the next state on the line through ``y`` along ``z``.

    Weights are ``prod 1/(y_i + n z_i)!``; for binomial data pass the lifted
    vector, on which this is the binomial kernel.
    """
    ns, probs = line_probabilities(y, z, upper)
    if len(ns) == 1:
        return np.asarray(y, dtype=np.int64).copy()
    n = ns[min(np.searchsorted(np.cumsum(probs), rng.random(), side="right"), len(ns) - 1)]
    return np.asarray(y, dtype=np.int64) + n * np.asarray(z, dtype=np.int64)


# -- compiled chain ------------------------------------------------------------


@numba.njit(nogil=True, cache=True)
def _chain_kernel(
    y, moves, supports, nsupp, upper, logfact, table, uniforms, nsteps, record_from,
    t_obs, tol, values, sig, multi, cmin, cmax, A, target, check_every, step0, states, record_states,
):
    K = y.shape[0]
    L = moves.shape[0]
    buf = np.empty(logfact.shape[0] + 1)
    for s in range(nsteps):
        j = int(uniforms[2 * s] * L)
        if j >= L:
            j = L - 1
        lo = -(1 << 60)
        hi = 1 << 60
        for q in range(nsupp[j]):
            i = supports[j, q]
            zi = moves[j, i]
            yi = y[i]
            if zi > 0:
                a = -(yi // zi)
                if a > lo:
                    lo = a
                b = (upper[i] - yi) // zi
                if b < hi:
                    hi = b
            else:
                b = yi // (-zi)
                if b < hi:
                    hi = b
                a = -((upper[i] - yi) // (-zi))
                if a > lo:
                    lo = a
        width = hi - lo + 1
        if width > 1:
            multi[0] += 1
            best = -np.inf
            for n in range(lo, hi + 1):
                lw = 0.0
                for q in range(nsupp[j]):
                    i = supports[j, q]
                    lw -= logfact[y[i] + n * moves[j, i]]
                buf[n - lo] = lw
                if lw > best:
                    best = lw
            total = 0.0
            for r in range(width):
                buf[r] = math.exp(buf[r] - best)
                total += buf[r]
            u = uniforms[2 * s + 1] * total
            acc = 0.0
            pick = width - 1
            for r in range(width):
                acc += buf[r]
                if u < acc:
                    pick = r
                    break
            n = lo + pick
            if n != 0:
                for q in range(nsupp[j]):
                    i = supports[j, q]
                    y[i] += n * moves[j, i]
        step = step0 + s
        if check_every > 0 and (step + 1) % check_every == 0:
            for r in range(A.shape[0]):
                acc_i = 0
                for i in range(K):
                    acc_i += A[r, i] * y[i]
                if acc_i != target[r]:
                    return step + 1
        if step >= record_from:
            t = 0.0
            for i in range(K):
                t += table[i, y[i]]
                if y[i] < cmin[i]:
                    cmin[i] = y[i]
                if y[i] > cmax[i]:
                    cmax[i] = y[i]
            k = step - record_from
            values[k] = t
            if t >= t_obs - tol:
                sig[k] = 1
            if record_states:
                for i in range(K):
                    states[k, i] = y[i]
    return 0


def _stat_table(stat: str, mu: np.ndarray, maxval: int) -> np.ndarray:
    v = np.arange(maxval + 1, dtype=np.float64)[None, :]
    m = np.asarray(mu, dtype=np.float64)[:, None]
    if stat == "deviance":
        with np.errstate(divide="ignore", invalid="ignore"):
            tab = np.where(v > 0, 2.0 * v * np.log(v / m), 0.0)
        return np.ascontiguousarray(tab)
    return np.ascontiguousarray((v - m) ** 2 / m)


@dataclass
class _Problem:
    """Everything a chain needs, on the (possibly lifted) Poisson-form vector."""

    y0: np.ndarray
    moves: np.ndarray
    supports: np.ndarray
    nsupp: np.ndarray
    upper: np.ndarray
    A: np.ndarray
    target: np.ndarray
    fitted: np.ndarray
    table: np.ndarray
    logfact: np.ndarray
    t_obs: float
    df: int


def _prepare(y0, moves: MoveSet, X0, cfg: ChainConfig, n=None, fitted=None) -> _Problem:
    X = np.asarray(getattr(X0, "entries", X0), dtype=np.int64)
    k, nu = X.shape
    y0 = np.asarray(y0, dtype=np.int64)
    if y0.shape != (k,):
        raise ValidationError(f"expected {k} observations, got {y0.shape[0]}")
    if len(moves) == 0:
        raise ValidationError("empty move set")
    Z = np.asarray(moves.moves, dtype=np.int64)
    At = X.T
    if cfg.family == "binomial":
        if n is None:
            raise ValidationError("binomial chain needs denominators")
        n = np.asarray(n, dtype=np.int64)
        yv = lift_counts(y0, n)
        if Z.shape[1] == k:
            Z = np.hstack([Z, -Z])
        if Z.shape[1] != 2 * k:
            raise ValidationError(f"moves have length {Z.shape[1]}, expected {k} or {2 * k}")
        if np.any(Z[:, k:] != -Z[:, :k]) or np.any(At @ Z[:, :k].T):
            raise ValidationError("moves are not kernel moves of the lifted matrix")
        A = np.block([[At, np.zeros_like(At)], [np.eye(k, dtype=np.int64), np.eye(k, dtype=np.int64)]])
        if fitted is None:
            res = fit(X, y0, "binomial", n)
            prob = res.mu
        else:
            prob = np.asarray(fitted, dtype=float)
        mu = np.concatenate([n * prob, n * (1.0 - prob)])
    else:
        yv = y0
        if Z.shape[1] != k:
            raise ValidationError(f"moves have length {Z.shape[1]}, expected {k}")
        if np.any(At @ Z.T):
            raise ValidationError("moves are not kernel moves of X0'")
        A = At
        mu = fit(X, y0, "poisson").mu if fitted is None else np.asarray(fitted, dtype=float)
    target = A @ yv
    ub = _cell_upper_bounds(A, target, None)
    if any(math.isinf(b) for b in ub):
        raise ValidationError("fiber is unbounded: the model needs an intercept")
    upper = np.array([int(b) for b in ub], dtype=np.int64)
    maxval = int(upper.max())
    supp = [np.flatnonzero(z) for z in Z]
    width = max(len(s) for s in supp)
    supports = np.zeros((len(Z), width), dtype=np.int64)
    for j, s in enumerate(supp):
        supports[j, : len(s)] = s
    nsupp = np.array([len(s) for s in supp], dtype=np.int64)
    table = _stat_table(cfg.statistic, mu, maxval)
    t_obs = float(table[np.arange(len(yv)), yv].sum())
    return _Problem(
        y0=yv, moves=np.ascontiguousarray(Z), supports=supports, nsupp=nsupp, upper=upper,
        A=np.ascontiguousarray(A), target=target, fitted=mu, table=table,
        logfact=gammaln(np.arange(maxval + 1, dtype=np.float64) + 1.0),
        t_obs=t_obs, df=k - nu,
    )


@dataclass
class _ChainOut:
    values: np.ndarray
    sig: np.ndarray
    multi: int
    cmin: np.ndarray
    cmax: np.ndarray
    states: np.ndarray | None


def _run_one(prob: _Problem, seed_seq: np.random.SeedSequence, burn_in: int, samples: int, cfg: ChainConfig) -> _ChainOut:
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    K = prob.y0.shape[0]
    y = prob.y0.copy()
    values = np.empty(samples)
    sig = np.zeros(samples, dtype=np.uint8)
    multi = np.zeros(1, dtype=np.int64)
    cmin = np.full(K, _BIG, dtype=np.int64)
    cmax = np.full(K, -1, dtype=np.int64)
    states = np.empty((samples if cfg.record_states else 0, K), dtype=np.int64)
    tol = TIE_RTOL * max(1.0, abs(prob.t_obs))
    total = burn_in + samples
    check = DEBUG_EVERY if cfg.debug else 0
    done = 0
    while done < total:
        m = min(CHUNK, total - done)
        u = rng.random(2 * m)
        bad = _chain_kernel(
            y, prob.moves, prob.supports, prob.nsupp, prob.upper, prob.logfact, prob.table, u, m,
            burn_in, prob.t_obs, tol, values, sig, multi, cmin, cmax, prob.A, prob.target, check,
            done, states, cfg.record_states,
        )
        if bad:
            raise AssertionError(f"state left the fiber at step {bad}")
        done += m
    return _ChainOut(values, sig, int(multi[0]), cmin, cmax, states if cfg.record_states else None)


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def batch_means(indicators: np.ndarray, batches: int) -> np.ndarray:
    return np.array([b.mean() for b in np.array_split(np.asarray(indicators, dtype=float), batches)])


def batch_se(means: np.ndarray) -> float:
    means = np.asarray(means, dtype=float)
    return float(means.std(ddof=1) / math.sqrt(len(means)))


def make_histogram(values: np.ndarray, df: int, bins: int = 100) -> Histogram:
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        hi = lo + 1.0
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    mids = 0.5 * (edges[:-1] + edges[1:])
    return Histogram(edges, counts, chisq_pdf(mids, df) if df > 0 else np.zeros(bins))


def run_chain(y0, moves: MoveSet, X0, cfg: ChainConfig, n=None, fitted=None) -> TestResult:
    """Burn in, then record ``cfg.samples`` states and count ``T >= t_obs``.

    With ``cfg.chains > 1`` the samples are split across independent chains
    (each with the full burn-in) run on worker threads; the batch means of
    all chains are pooled.
    """
    prob = _prepare(y0, moves, X0, cfg, n, fitted)
    root = np.random.SeedSequence(cfg.seed)
    seqs = [root] if cfg.chains == 1 else root.spawn(cfg.chains)
    sizes = _split(cfg.samples, cfg.chains)
    if cfg.chains == 1:
        outs = [_run_one(prob, seqs[0], cfg.burn_in, sizes[0], cfg)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.chains) as pool:
            outs = list(pool.map(lambda a: _run_one(prob, a[0], cfg.burn_in, a[1], cfg), zip(seqs, sizes)))
    per = cfg.batches // cfg.chains
    means = np.concatenate([batch_means(o.sig, per) for o in outs])
    values = np.concatenate([o.values for o in outs])
    sig = np.concatenate([o.sig for o in outs])
    steps = cfg.chains * cfg.burn_in + cfg.samples
    return TestResult(
        t_obs=prob.t_obs,
        df=prob.df,
        p_mcmc=float(sig.sum() / cfg.samples),
        se_batch=batch_se(means),
        p_asymptotic=chisq_upper_tail(max(prob.t_obs, 0.0), prob.df) if prob.df > 0 else float("nan"),
        histogram=make_histogram(values, prob.df),
        multi_step_fraction=sum(o.multi for o in outs) / steps,
        samples=cfg.samples,
        burn_in=cfg.burn_in,
        batch_means=means,
        cell_min=np.min([o.cmin for o in outs], axis=0),
        cell_max=np.max([o.cmax for o in outs], axis=0),
        statistic=cfg.statistic,
        family=cfg.family,
        states=np.concatenate([o.states for o in outs]) if cfg.record_states else None,
        values=values,
    )


def run_chain_python(
    y0, moves: MoveSet, statistic: Callable[[np.ndarray], float], seed: int, burn_in: int, samples: int,
    upper=None,
) -> tuple[float, np.ndarray]:
    """Interpreted chain for arbitrary statistics on the Poisson-form vector.

    Consumes the uniform stream in the same order as the compiled chain, so
    for a separable statistic both paths visit the same states barring
    floating-point near-ties in the line weights.  Returns
    ``(p_mcmc, recorded values)``.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    y = np.asarray(y0, dtype=np.int64).copy()
    Z = moves.moves
    L = len(Z)
    t_obs = float(statistic(y))
    tol = TIE_RTOL * max(1.0, abs(t_obs))
    values = np.empty(samples)
    sig = 0
    for s in range(burn_in + samples):
        u = rng.random(2)
        z = Z[min(int(u[0] * L), L - 1)]
        ns, probs = line_probabilities(y, z, upper)
        if len(ns) > 1:
            w = probs / probs.max()
            acc = np.cumsum(w)
            r = int(np.searchsorted(acc, u[1] * acc[-1], side="right"))
            y = y + ns[min(r, len(ns) - 1)] * z
        if s >= burn_in:
            t = float(statistic(y))
            values[s - burn_in] = t
            sig += t >= t_obs - tol
    return sig / samples, values
