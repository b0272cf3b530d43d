"""Target distributions: potential energy, exact and minibatch gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .core import ContractViolation, as_vector


@dataclass(frozen=True)
class TargetModel:
    """Potential ``U(theta) = -log p~(theta)`` with its gradients.

    ``minibatch_grad(theta, batch)`` must be an unbiased estimate of
    ``grad(theta)`` over uniformly drawn batches, and equal to it on the full
    index set. Analytic targets have ``data_size == 1`` and ignore ``batch``.
    """

    dim: int
    potential: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    minibatch_grad: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    data_size: int = 1
    name: str = "target"
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ContractViolation("target dimension must be >= 1")
        if self.data_size < 1:
            raise ContractViolation("data_size must be >= 1")
        if self.minibatch_grad is None:
            object.__setattr__(self, "minibatch_grad", lambda theta, batch: self.grad(theta))

    def gradient(self, theta, batch=None):
        """Exact gradient when ``batch`` is None, otherwise the minibatch estimate."""
        if batch is None:
            return self.grad(theta)
        return self.minibatch_grad(theta, batch)


def make_gaussian(mean, variances):
    """Axis-aligned Gaussian, ``U = sum (theta_i - mu_i)^2 / (2 sigma_i^2)``."""
    mean = as_vector(mean, "mean")
    variances = as_vector(variances, "variances")
    if mean.shape != variances.shape:
        raise ContractViolation("mean and variances must have the same length")
    if not np.all(np.isfinite(variances)) or np.any(variances <= 0):
        raise ContractViolation("variances must be finite and strictly positive")
    precision = 1.0 / variances

    def potential(theta):
        r = theta - mean
        with np.errstate(over="ignore"):  # inf is caught by the samplers
            return float(0.5 * np.sum(r * r * precision))

    def grad(theta):
        return (theta - mean) * precision

    return TargetModel(
        dim=mean.shape[0],
        potential=potential,
        grad=grad,
        name="gaussian",
        info={"mean": mean.copy(), "variances": variances.copy()},
    )


def make_harmonic_oscillator():
    """1-d standard Gaussian, ``U = theta^2 / 2``."""
    target = make_gaussian([0.0], [1.0])
    return TargetModel(
        dim=1, potential=target.potential, grad=target.grad, name="harmonic", info=target.info
    )


def make_banana(curvature, scale=1.0):
    """Rosenbrock-style warp of a 2-d Gaussian.

    U(t1, t2) = t1^2 / (2 s^2) + (t2 - b (t1^2 - s^2))^2 / 2
    """
    b = float(curvature)
    s = float(scale)
    if not np.isfinite(b):
        raise ContractViolation("curvature must be finite")
    if not (np.isfinite(s) and s > 0):
        raise ContractViolation("scale must be finite and > 0")
    s2 = s * s

    def potential(theta):
        t1, t2 = theta
        r = t2 - b * (t1 * t1 - s2)
        return float(0.5 * t1 * t1 / s2 + 0.5 * r * r)

    def grad(theta):
        t1, t2 = theta
        r = t2 - b * (t1 * t1 - s2)
        return np.array([t1 / s2 - 2.0 * b * t1 * r, r])

    return TargetModel(
        dim=2, potential=potential, grad=grad, name="banana", info={"curvature": b, "scale": s}
    )


def _softplus(z):
    # log(1 + exp(z)) without overflow
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def make_logistic_regression(features, labels, prior_precision=1.0):
    """Bayesian logistic regression posterior with a Gaussian prior.

    U(theta) = sum_n log(1 + exp(-y_n x_n^T theta)) + prior_precision / 2 |theta|^2,
    with labels in {0, 1} mapped to y in {-1, +1}. The minibatch gradient
    rescales the batch likelihood sum by N / |batch| and adds the full prior
    gradient.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ContractViolation(f"features must be an N x p matrix, got shape {x.shape}")
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != x.shape[0]:
        raise ContractViolation("labels must be a vector with one entry per feature row")
    if x.shape[0] < 1:
        raise ContractViolation("need at least one data point")
    if not np.all(np.isin(labels, (0, 1))):
        raise ContractViolation("labels must be 0 or 1")
    lam = float(prior_precision)
    if not (np.isfinite(lam) and lam >= 0):
        raise ContractViolation("prior_precision must be finite and >= 0")
    if not np.all(np.isfinite(x)):
        raise ContractViolation("features must be finite")

    n, p = x.shape
    y = np.where(labels == 1, 1.0, -1.0)
    yx = y[:, None] * x

    def potential(theta):
        z = yx @ theta
        return float(np.sum(_softplus(-z)) + 0.5 * lam * (theta @ theta))

    def _lik_grad(theta, rows):
        z = rows @ theta
        return -(expit(-z) @ rows)

    def grad(theta):
        return _lik_grad(theta, yx) + lam * theta

    def minibatch_grad(theta, batch):
        batch = np.asarray(batch, dtype=np.intp)
        if batch.size == 0:
            raise ContractViolation("empty minibatch")
        return (n / batch.size) * _lik_grad(theta, yx[batch]) + lam * theta

    return TargetModel(
        dim=p,
        potential=potential,
        grad=grad,
        minibatch_grad=minibatch_grad,
        data_size=n,
        name="logistic",
        info={"prior_precision": lam},
    )


def make_synthetic_logistic_data(n_data, n_features, seed=0, noise=0.0, theta_true=None):
    """Draw ``(features, labels, theta_true)`` for a logistic-regression problem.

    Features are standard normal. ``noise`` is the probability of flipping
    each label after drawing it from the logistic model.
    """
    if n_data < 1 or n_features < 1:
        raise ContractViolation("n_data and n_features must be >= 1")
    if not 0.0 <= noise <= 1.0:
        raise ContractViolation("noise must be a probability")
    rng = np.random.default_rng(seed)
    if theta_true is None:
        theta_true = rng.standard_normal(n_features)
    theta_true = as_vector(theta_true, "theta_true")
    x = rng.standard_normal((n_data, n_features))
    labels = (rng.random(n_data) < expit(x @ theta_true)).astype(np.int64)
    flip = rng.random(n_data) < noise
    labels = np.where(flip, 1 - labels, labels)
    return x, labels, theta_true


class MinibatchSchedule:
    """Epoch-wise sampling without replacement.

    Each epoch is a fresh permutation of ``range(data_size)`` cut into
    ``data_size // batch_size`` batches. Deterministic given ``seed``.
    """

    def __init__(self, data_size, batch_size, seed=0):
        if batch_size < 1 or data_size < 1:
            raise ContractViolation("data_size and batch_size must be >= 1")
        if data_size % batch_size:
            raise ContractViolation(
                f"batch_size {batch_size} must divide data_size {data_size}"
            )
        self.data_size = data_size
        self.batch_size = batch_size
        self.seed = seed
        self.position = 0
        self.epoch = 0
        self._rng = np.random.default_rng(seed)
        self._perm = self._rng.permutation(data_size)

    @property
    def batches_per_epoch(self):
        return self.data_size // self.batch_size

    def next_batch(self):
        if self.position >= self.data_size:
            self._perm = self._rng.permutation(self.data_size)
            self.position = 0
            self.epoch += 1
        start = self.position
        self.position += self.batch_size
        return np.sort(self._perm[start:self.position])

    def palindromic_batches(self, n_steps):
        """Batches for ``n_steps`` consecutive steps, mirrored around the middle.

        The first ``ceil(n_steps / 2)`` batches are drawn from the epoch
        stream; the rest repeat them in reverse, so the sequence reads the
        same backwards.
        """
        head = [self.next_batch() for _ in range((n_steps + 1) // 2)]
        tail = head[: n_steps // 2][::-1]
        return head + tail


def next_batch(schedule):
    return schedule.next_batch()
