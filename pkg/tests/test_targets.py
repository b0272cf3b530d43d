import math

import numpy as np
import pytest

from conftest import central_difference
from ggmc import (
    ContractViolation,
    MinibatchSchedule,
    make_banana,
    make_gaussian,
    make_harmonic_oscillator,
    make_logistic_regression,
    make_synthetic_logistic_data,
    next_batch,
)


def logistic_target(n=200, p=3, seed=3, prior=1.0):
    x, y, _ = make_synthetic_logistic_data(n, p, seed=seed)
    return make_logistic_regression(x, y, prior)


SHIPPED = {
    "gaussian": lambda: make_gaussian([0.5, -1.0, 2.0], [1.0, 0.25, 9.0]),
    "harmonic": make_harmonic_oscillator,
    "banana": lambda: make_banana(0.8, 1.5),
    "banana_flat": lambda: make_banana(0.0, 1.0),
    "logistic": logistic_target,
}


@pytest.mark.parametrize("name", sorted(SHIPPED))
def test_gradient_matches_finite_differences(name, rng):
    target = SHIPPED[name]()
    for _ in range(100):
        theta = rng.uniform(-3, 3, size=target.dim)
        g = target.grad(theta)
        fd = central_difference(target.potential, theta)
        assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1.0)


@pytest.mark.parametrize("name", sorted(SHIPPED))
def test_potential_bounded_below(name, rng):
    target = SHIPPED[name]()
    values = [target.potential(rng.uniform(-10, 10, size=target.dim)) for _ in range(200)]
    assert min(values) >= 0.0


class TestGaussian:
    def test_mode(self, std_normal):
        assert std_normal.potential(np.array([0.0])) == 0.0
        assert std_normal.grad(np.array([0.0]))[0] == 0.0

    def test_quadratic(self, std_normal):
        assert std_normal.potential(np.array([2.0])) == 2.0
        assert std_normal.grad(np.array([2.0]))[0] == 2.0
        assert std_normal.data_size == 1

    @pytest.mark.parametrize("var", [0.0, -1.0, np.nan])
    def test_rejects_bad_variance(self, var):
        with pytest.raises(ContractViolation):
            make_gaussian([0.0], [var])

    def test_minibatch_is_exact(self, rng):
        t = make_gaussian([1.0], [2.0])
        theta = rng.normal(size=1)
        np.testing.assert_array_equal(t.minibatch_grad(theta, [0]), t.grad(theta))


class TestBanana:
    def test_zero_curvature_is_gaussian(self, rng):
        banana = make_banana(0.0, 2.0)
        gauss = make_gaussian([0.0, 0.0], [4.0, 1.0])
        for _ in range(20):
            theta = rng.normal(size=2) * 3
            assert banana.potential(theta) == pytest.approx(gauss.potential(theta), rel=1e-14)

    def test_ridge(self, rng):
        b, s = 1.3, 0.7
        banana = make_banana(b, s)
        for t1 in rng.normal(size=10):
            theta = np.array([t1, b * (t1 * t1 - s * s)])
            assert banana.potential(theta) == pytest.approx(t1 * t1 / (2 * s * s), rel=1e-14)

    def test_rejects_bad_scale(self):
        with pytest.raises(ContractViolation):
            make_banana(1.0, 0.0)


class TestLogisticRegression:
    def test_zero_feature(self, rng):
        lam = 0.7
        t = make_logistic_regression(np.zeros((1, 2)), [1], lam)
        for _ in range(5):
            theta = rng.normal(size=2)
            expected = math.log(2.0) + 0.5 * lam * theta @ theta
            assert t.potential(theta) == pytest.approx(expected, rel=1e-14)

    def test_full_batch_equals_grad(self, rng):
        t = logistic_target()
        full = np.arange(t.data_size)
        for _ in range(10):
            theta = rng.normal(size=t.dim)
            np.testing.assert_allclose(t.minibatch_grad(theta, full), t.grad(theta), rtol=1e-12)

    def test_minibatch_unbiased(self, rng):
        t = logistic_target(n=100, p=2)
        theta = np.array([0.4, -0.3])
        draws = np.array(
            [t.minibatch_grad(theta, rng.choice(t.data_size, 10, replace=False))
             for _ in range(10_000)]
        )
        se = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
        assert np.all(np.abs(draws.mean(axis=0) - t.grad(theta)) < 3 * se)

    def test_labels_map_to_signs(self):
        x = np.array([[1.0], [1.0]])
        t = make_logistic_regression(x, [1, 0], 0.0)
        # theta=0: both terms log 2; theta large positive: first term -> 0, second grows
        assert t.potential(np.array([0.0])) == pytest.approx(2 * math.log(2))
        assert t.potential(np.array([30.0])) == pytest.approx(30.0, rel=1e-10)

    def test_stable_for_large_margins(self):
        t = make_logistic_regression(np.array([[1000.0]]), [0], 0.0)
        assert t.potential(np.array([5.0])) == pytest.approx(5000.0)
        assert np.isfinite(t.grad(np.array([5.0]))).all()

    @pytest.mark.parametrize(
        "x, y",
        [
            (np.zeros(3), [0, 1, 0]),
            (np.zeros((3, 2)), [0, 1]),
            (np.zeros((2, 2)), [0, 2]),
            (np.zeros((0, 2)), []),
        ],
    )
    def test_construction_errors(self, x, y):
        with pytest.raises(ContractViolation):
            make_logistic_regression(x, np.asarray(y), 1.0)


class TestMinibatchSchedule:
    def test_partition(self):
        s = MinibatchSchedule(4, 2, seed=1)
        a, b = next_batch(s), next_batch(s)
        assert sorted(np.concatenate([a, b]).tolist()) == [0, 1, 2, 3]

    def test_deterministic(self):
        s1, s2 = MinibatchSchedule(12, 3, seed=5), MinibatchSchedule(12, 3, seed=5)
        for _ in range(20):
            np.testing.assert_array_equal(s1.next_batch(), s2.next_batch())

    def test_each_index_once_per_epoch(self):
        s = MinibatchSchedule(50, 5, seed=2)
        for epoch in range(3):
            counts = np.zeros(50, dtype=int)
            for _ in range(s.batches_per_epoch):
                np.add.at(counts, s.next_batch(), 1)
            assert np.all(counts == 1)
        assert s.epoch == 2

    def test_reshuffles(self):
        s = MinibatchSchedule(20, 10, seed=0)
        first = [s.next_batch().tolist() for _ in range(2)]
        second = [s.next_batch().tolist() for _ in range(2)]
        assert first != second

    def test_batch_must_divide(self):
        with pytest.raises(ContractViolation):
            MinibatchSchedule(10, 3)

    @pytest.mark.parametrize("n", [1, 2, 5, 10])
    def test_palindromic_batches(self, n):
        s = MinibatchSchedule(100, 10, seed=4)
        batches = [b.tolist() for b in s.palindromic_batches(n)]
        assert len(batches) == n
        assert batches == batches[::-1]
        distinct = {tuple(b) for b in batches}
        assert len(distinct) == (n + 1) // 2
