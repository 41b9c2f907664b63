import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import X0T_5_2
from fracfact.design import Word, build_design_matrix
from fracfact.errors import BudgetExceeded, ValidationError
from fracfact.fiber import enumerate_fiber, exact_null_distribution, exact_pvalue, log_weights
from fracfact.glm import deviance
from fracfact.model import ModelSpec, build_covariate_matrix, lawrence_lift, lift_counts


def compositions(total: int, k: int):
    if k == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in compositions(total - first, k - 1):
            yield (first, *rest)


def brute_force_fiber(A, t, upper=None) -> set[tuple]:
    """Exhaustive search; the first row of ``A`` must be all ones."""
    A = np.asarray(A)
    t = np.asarray(t)
    assert np.all(A[0] == 1)
    out = set()
    for y in compositions(int(t[0]), A.shape[1]):
        if upper is not None and any(a > b for a, b in zip(y, upper)):
            continue
        if np.array_equal(A @ np.array(y), t):
            out.add(y)
    return out


def as_set(fiber) -> set[tuple]:
    return {tuple(int(v) for v in y) for y in fiber.points}


@st.composite
def small_instances(draw):
    k = draw(st.integers(2, 6))
    extra = draw(st.integers(0, 2))
    rows = [[1] * k] + [draw(st.lists(st.integers(-2, 2), min_size=k, max_size=k)) for _ in range(extra)]
    y = draw(st.lists(st.integers(0, 3), min_size=k, max_size=k))
    return np.array(rows), np.array(y)


class TestEnumerate:
    def test_intercept_only(self):
        fib = enumerate_fiber([[1, 1]], [2])
        assert as_set(fib) == {(0, 2), (1, 1), (2, 0)}

    def test_saturated_is_singleton(self, wavesolder):
        spec, _, _, y, _ = wavesolder
        D = build_design_matrix(spec)
        words = [Word(c) for r in range(1, 5) for c in itertools.combinations(range(4), r)]
        H = build_covariate_matrix(D, ModelSpec(frozenset(words), hierarchical=False)).entries.T
        fib = enumerate_fiber(H, H @ y)
        assert len(fib) == 1 and np.array_equal(fib.points[0], y)

    def test_main_effects_5_2_against_brute_force(self):
        t = X0T_5_2 @ np.ones(8, dtype=int)
        fib = enumerate_fiber(X0T_5_2, t)
        assert as_set(fib) == brute_force_fiber(X0T_5_2, t)
        assert np.all(fib.points @ X0T_5_2.T == t)

    @given(small_instances())
    def test_against_brute_force(self, inst):
        A, y = inst
        t = A @ y
        assert as_set(enumerate_fiber(A, t)) == brute_force_fiber(A, t)

    @given(small_instances(), st.integers(0, 3))
    def test_upper_bounds(self, inst, cap):
        A, y = inst
        upper = np.maximum(y, cap)
        t = A @ y
        got = as_set(enumerate_fiber(A, t, upper))
        assert got == brute_force_fiber(A, t, upper)
        assert tuple(y) in got

    def test_empty_fiber(self):
        assert len(enumerate_fiber([[1, 1], [1, -1]], [1, 0])) == 0

    def test_unbounded(self):
        with pytest.raises(ValidationError):
            enumerate_fiber([[1, -1]], [0])

    def test_budget(self):
        with pytest.raises(BudgetExceeded, match="fiber too large"):
            enumerate_fiber([[1] * 6], [20], max_points=100)


class TestNullDistribution:
    def test_singleton(self):
        fib = enumerate_fiber([[1, 0], [0, 1]], [3, 4])
        assert exact_null_distribution(fib).tolist() == [1.0]

    def test_two_cells(self):
        fib = enumerate_fiber([[1, 1]], [2])
        probs = dict(zip(map(tuple, fib.points.tolist()), exact_null_distribution(fib)))
        assert probs[(0, 2)] == pytest.approx(0.25, abs=1e-15)
        assert probs[(1, 1)] == pytest.approx(0.5, abs=1e-15)
        assert probs[(2, 0)] == pytest.approx(0.25, abs=1e-15)

    def test_weights_normalized(self):
        t = X0T_5_2 @ np.array([3, 1, 4, 1, 5, 9, 2, 6])
        fib = enumerate_fiber(X0T_5_2, t)
        probs = exact_null_distribution(fib)
        assert abs(probs.sum() - 1.0) < 1e-12
        # direct normalization with exact factorials
        w = np.array([1.0 / math.prod(math.factorial(int(v)) for v in y) for y in fib.points])
        assert np.allclose(probs, w / w.sum(), rtol=1e-12, atol=0)

    def test_binomial_lifted_equals_direct(self):
        A = np.array([[1, 1, 1]])
        n = np.array([2, 3, 2])
        y = np.array([1, 2, 0])
        L = lawrence_lift(A)
        fib = enumerate_fiber(L, L @ lift_counts(y, n), np.concatenate([n, n]))
        probs = exact_null_distribution(fib, "poisson")
        direct = {}
        for s in itertools.product(*(range(v + 1) for v in n)):
            if sum(s) == y.sum():
                direct[s] = math.prod(math.comb(int(a), int(b)) for a, b in zip(n, s))
        total = sum(direct.values())
        got = {tuple(p[:3].tolist()): q for p, q in zip(fib.points, probs)}
        assert set(got) == set(direct)
        for s, w in direct.items():
            assert got[s] == pytest.approx(w / total, rel=1e-12)

    def test_binomial_weights_need_n(self):
        with pytest.raises(ValidationError):
            log_weights(np.zeros((1, 2)), "binomial")


class TestExactPvalue:
    def test_constant_statistic(self):
        fib = enumerate_fiber([[1, 1, 1]], [4])
        assert exact_pvalue(fib, lambda v: 3.0, [4, 0, 0]) == 1.0

    def test_unique_maximizer(self):
        fib = enumerate_fiber([[1, 1]], [4])
        probs = exact_null_distribution(fib)
        stat = lambda v: float(v[0])  # noqa: E731
        p = exact_pvalue(fib, stat, [4, 0], probs=probs)
        assert p == pytest.approx(probs[fib.position([4, 0])], abs=1e-15)
        assert p == pytest.approx(1 / 16, abs=1e-15)

    def test_ties_count(self):
        fib = enumerate_fiber([[1, 1]], [2])
        mu = np.array([1.0, 1.0])
        # (0,2) and (2,0) tie in deviance; both count
        p = exact_pvalue(fib, lambda v: deviance(v, mu), [0, 2])
        assert p == pytest.approx(0.5, abs=1e-15)
