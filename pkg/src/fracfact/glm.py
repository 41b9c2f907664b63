"""Null-model fitting (Poisson/log and binomial/logit) and goodness-of-fit tails."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConvergenceError, ParseError, ValidationError

SCORE_TOL = 1e-10
DEVIANCE_RTOL = 1e-12
MAX_ITER = 100


class SeparationWarning(UserWarning):
    """Fitted means ran to the boundary of the parameter space."""


@dataclass
class FitResult:
    beta: np.ndarray
    mu: np.ndarray
    iterations: int
    converged: bool
    df: int
    family: str
    denominators: np.ndarray | None = None

    @property
    def fitted(self) -> np.ndarray:
        """Expected counts: ``mu`` (Poisson) or ``n * mu`` (binomial)."""
        if self.family == "binomial":
            return self.denominators * self.mu
        return self.mu


def _check_family(family: str) -> None:
    if family not in ("poisson", "binomial"):
        raise ValidationError(f"unknown family {family!r}; use 'poisson' or 'binomial'")


def log_likelihood(X, y, beta, family: str = "poisson", n=None) -> float:
    """Canonical-link log-likelihood without the parameter-free constant."""
    eta = np.asarray(X, dtype=float) @ beta
    y = np.asarray(y, dtype=float)
    if family == "poisson":
        return float(y @ eta - np.exp(eta).sum())
    n = np.asarray(n, dtype=float)
    return float(y @ eta - (n * np.logaddexp(0.0, eta)).sum())


def score(X, y, beta, family: str = "poisson", n=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    eta = X @ beta
    if family == "poisson":
        mean = np.exp(eta)
    else:
        mean = np.asarray(n, dtype=float) / (1.0 + np.exp(-eta))
    return X.T @ (np.asarray(y, dtype=float) - mean)


def fit(X0, y, family: str = "poisson", n=None, max_iter: int = MAX_ITER) -> FitResult:
    """Maximum likelihood fit by Newton-Raphson from ``beta = 0``.

    Steps are halved until the log-likelihood does not decrease.  The fit
    stops once the largest score component is below ``SCORE_TOL`` and the
    relative change in deviance is below ``DEVIANCE_RTOL``.

    Raises:
        ConvergenceError: no convergence within ``max_iter`` iterations.
    """
    _check_family(family)
    X = np.asarray(getattr(X0, "entries", X0), dtype=float)
    y = np.asarray(y, dtype=float)
    k, nu = X.shape
    if y.shape != (k,):
        raise ValidationError(f"expected {k} observations, got {y.shape[0]}")
    if np.any(y < 0):
        raise ValidationError("counts must be nonnegative")
    if family == "binomial":
        if n is None:
            raise ValidationError("binomial fit needs denominators")
        n = np.asarray(n, dtype=float)
        if n.shape != (k,) or np.any(y > n) or np.any(n <= 0):
            raise ValidationError("binomial data must satisfy 0 <= y <= n with n > 0")
    if np.linalg.matrix_rank(X) < nu:
        raise ValidationError("covariate matrix is not of full column rank")

    beta = np.zeros(nu)
    ll = log_likelihood(X, y, beta, family, n)
    dev_prev = math.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = X @ beta
        if family == "poisson":
            mean = np.exp(eta)
            w = mean
        else:
            p = 1.0 / (1.0 + np.exp(-eta))
            mean = n * p
            w = n * p * (1.0 - p)
        grad = X.T @ (y - mean)
        info = X.T @ (w[:, None] * X)
        try:
            step = cho_solve(cho_factor(info), grad)
        except np.linalg.LinAlgError:
            raise ConvergenceError("information matrix lost positive definiteness") from None
        t = 1.0
        for _ in range(60):
            cand = beta + t * step
            ll_new = log_likelihood(X, y, cand, family, n)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        beta, ll = cand, ll_new
        mu = _mean(X, beta, family)
        dev = deviance(y, mu, family, n)
        sc = np.abs(score(X, y, beta, family, n)).max()
        rel = abs(dev - dev_prev) / max(abs(dev), 1e-300) if math.isfinite(dev_prev) else math.inf
        if sc < SCORE_TOL and (rel < DEVIANCE_RTOL or dev == dev_prev):
            converged = True
            break
        # float round-off can floor the score slightly above SCORE_TOL
        if np.all(np.abs(t * step) < 1e-15 * (1.0 + np.abs(beta))) and sc < 1e-7:
            converged = True
            break
        dev_prev = dev
    if not converged:
        raise ConvergenceError(f"Newton-Raphson did not converge in {max_iter} iterations")
    mu = _mean(X, beta, family)
    if family == "poisson":
        boundary = np.any(mu < 1e-8)
    else:
        boundary = np.any(n * mu < 1e-8) or np.any(n * (1.0 - mu) < 1e-8)
    if boundary:
        warnings.warn("quasi-complete separation: fitted means at the boundary", SeparationWarning, stacklevel=2)
    return FitResult(beta, mu, it, converged, k - nu, family, n)


def parse_data(text: str) -> tuple[np.ndarray, np.ndarray | None]:
    """One run per line: ``count`` (Poisson) or ``successes denominator``.

    Returns ``(y, n)`` with ``n`` None for count data.
    """
    rows = [ln.split("#", 1)[0].split() for ln in text.splitlines()]
    rows = [r for r in rows if r]
    if not rows:
        raise ParseError("empty data file")
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() not in (1, 2):
        raise ParseError("data lines must all hold one count or all hold 'successes denominator'")
    try:
        arr = np.array([[int(x) for x in r] for r in rows], dtype=np.int64)
    except ValueError as exc:
        raise ParseError(f"non-integer data entry: {exc}") from None
    if np.any(arr < 0):
        raise ValidationError("counts must be nonnegative")
    if arr.shape[1] == 1:
        return arr[:, 0], None
    y, n = arr[:, 0], arr[:, 1]
    if np.any(y > n) or np.any(n <= 0):
        raise ValidationError("binomial data must satisfy 0 <= y <= n with n > 0")
    return y, n


def load_data(path) -> tuple[np.ndarray, np.ndarray | None]:
    with open(path) as fh:
        return parse_data(fh.read())


def _mean(X, beta, family):
    eta = X @ beta
    if family == "poisson":
        return np.exp(eta)
    return 1.0 / (1.0 + np.exp(-eta))


def _xlogy_ratio(y, m):
    y = np.asarray(y, dtype=float)
    m = np.asarray(m, dtype=float)
    out = np.zeros_like(y)
    pos = y > 0
    out[pos] = y[pos] * np.log(y[pos] / m[pos])
    return out


def likelihood_ratio_stat(y, mu, n=None) -> float:
    """G^2 = 2 sum y log(y / mu), with 0 log 0 = 0.

    With denominators ``n`` the binomial form is used, ``mu`` being the
    fitted success probability.
    """
    if n is None:
        return float(2.0 * _xlogy_ratio(y, mu).sum())
    n = np.asarray(n, dtype=float)
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return float(2.0 * (_xlogy_ratio(y, n * mu) + _xlogy_ratio(n - y, n * (1.0 - mu))).sum())


def deviance(y, mu, family: str = "poisson", n=None) -> float:
    return likelihood_ratio_stat(y, mu, n if family == "binomial" else None)


def pearson_stat(y, mu, n=None) -> float:
    """Pearson X^2; binomial form when denominators are given."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if n is None:
        if np.any(mu <= 0):
            raise ValidationError("Pearson statistic undefined for a zero fitted mean")
        return float(((y - mu) ** 2 / mu).sum())
    n = np.asarray(n, dtype=float)
    var = n * mu * (1.0 - mu)
    if np.any(var <= 0):
        raise ValidationError("Pearson statistic undefined for a boundary fitted mean")
    return float(((y - n * mu) ** 2 / var).sum())


# -- chi-square tail via the regularized incomplete gamma function -----------

_EPS = 1e-16
_TINY = 1e-300


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    # modified Lentz evaluation of the Legendre continued fraction
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma ``Q(a, x)``."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 1.0
    # series below the shape parameter, continued fraction at or above it
    if x < a:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_contfrac(a, x)


def chisq_upper_tail(x: float, df: int) -> float:
    """P(chi^2_df >= x)."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x < 0:
        raise ValueError("statistic must be nonnegative")
    return regularized_gamma_q(df / 2.0, x / 2.0)


def chisq_pdf(x, df: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    a = df / 2.0
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp((a - 1.0) * np.log(x[pos]) - x[pos] / 2.0 - a * math.log(2.0) - math.lgamma(a))
    if df == 2:
        out[x == 0] = 0.5
    return out
