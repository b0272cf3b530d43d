"""Phase-space state, mass matrix algebra and the Boltzmann density."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .targets import TargetModel


class ContractViolation(ValueError):
    """Raised when inputs break a documented precondition (shapes, domains)."""


class NumericalInstability(FloatingPointError):
    """A non-finite energy or gradient appeared mid-step.

    Samplers treat this as a forced rejection. ``trace`` holds whatever part
    of the step was computed before the failure (may be ``None``).
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


def as_vector(x, name="array"):
    """Return ``x`` as a 1-d float64 array, rejecting other ranks."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ContractViolation(f"{name} must be 1-dimensional, got shape {arr.shape}")
    return arr


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


def all_finite(arr):
    # a single reduction; an overflowing sum only occurs near the float range limit
    return math.isfinite(arr.sum())


@dataclass(frozen=True, eq=False)
class PhaseState:
    """Position ``theta`` and momentum ``momentum`` of a chain."""

    theta: np.ndarray
    momentum: np.ndarray

    def __post_init__(self):
        theta = as_vector(self.theta, "theta")
        momentum = as_vector(self.momentum, "momentum")
        if theta.shape != momentum.shape:
            raise ContractViolation(
                f"theta and momentum dimensions differ: {theta.shape} vs {momentum.shape}"
            )
        if theta.size == 0:
            raise ContractViolation("dimension must be at least 1")
        if not (all_finite(theta) and all_finite(momentum)):
            raise NumericalInstability("non-finite entries in phase state")
        object.__setattr__(self, "theta", _frozen(theta))
        object.__setattr__(self, "momentum", _frozen(momentum))

    @property
    def dim(self):
        return self.theta.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PhaseState):
            return NotImplemented
        return np.array_equal(self.theta, other.theta) and np.array_equal(
            self.momentum, other.momentum
        )

    def __repr__(self):
        return f"PhaseState(theta={self.theta.tolist()}, momentum={self.momentum.tolist()})"


@dataclass(frozen=True, eq=False)
class MassMatrix:
    """Diagonal positive-definite mass matrix ``M``."""

    diag: np.ndarray
    _sqrt: np.ndarray = field(init=False, repr=False)
    _inv: np.ndarray = field(init=False, repr=False)
    _inv_sqrt: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        diag = as_vector(self.diag, "mass diagonal")
        if diag.size == 0 or not np.all(np.isfinite(diag)) or np.any(diag <= 0):
            raise ContractViolation("mass matrix entries must be finite and strictly positive")
        object.__setattr__(self, "diag", _frozen(diag))
        object.__setattr__(self, "_sqrt", _frozen(np.sqrt(diag)))
        object.__setattr__(self, "_inv", _frozen(1.0 / diag))
        object.__setattr__(self, "_inv_sqrt", _frozen(1.0 / np.sqrt(diag)))

    @classmethod
    def identity(cls, dim):
        return _identity(dim)

    @property
    def dim(self):
        return self.diag.shape[0]

    def _check(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1:] != (self.dim,):
            raise ContractViolation(
                f"vector of shape {v.shape} does not match mass matrix of dimension {self.dim}"
            )
        return v

    def apply(self, v):
        return self.diag * self._check(v)

    def inverse_apply(self, v):
        return self._inv * self._check(v)

    def sqrt_apply(self, v):
        return self._sqrt * self._check(v)

    def inverse_sqrt_apply(self, v):
        return self._inv_sqrt * self._check(v)

    def log_det(self):
        return float(np.sum(np.log(self.diag)))

    def dense(self):
        return np.diag(self.diag)

    def __eq__(self, other):
        if not isinstance(other, MassMatrix):
            return NotImplemented
        return np.array_equal(self.diag, other.diag)

    def __hash__(self):
        return hash(self.diag.tobytes())


@lru_cache(maxsize=64)
def _identity(dim):
    return MassMatrix(np.ones(dim))


@dataclass(frozen=True)
class SamplerConfig:
    """Step size ``h``, friction ``gamma``, temperature ``T`` and mass ``M``.

    ``gamma`` must be finite; the infinite-friction limit is the SGLD
    integrator, not a stored value.
    """

    step_size: float
    friction: float = 0.0
    temperature: float = 1.0
    mass: MassMatrix | None = None

    def __post_init__(self):
        h, gamma, temp = float(self.step_size), float(self.friction), float(self.temperature)
        if not (np.isfinite(h) and h > 0):
            raise ContractViolation(f"step_size must be finite and > 0, got {self.step_size!r}")
        if not (np.isfinite(gamma) and gamma >= 0):
            raise ContractViolation(f"friction must be finite and >= 0, got {self.friction!r}")
        if not (np.isfinite(temp) and temp > 0):
            raise ContractViolation(f"temperature must be finite and > 0, got {self.temperature!r}")
        object.__setattr__(self, "step_size", h)
        object.__setattr__(self, "friction", gamma)
        object.__setattr__(self, "temperature", temp)

    @property
    def momentum_permanence(self):
        """``a = exp(-gamma h)``, the fraction of momentum kept by one O step."""
        return math.exp(-self.friction * self.step_size)

    def mass_for(self, dim):
        """The configured mass matrix, or the identity when none was given."""
        if self.mass is None:
            return MassMatrix.identity(dim)
        if self.mass.dim != dim:
            raise ContractViolation(
                f"mass matrix dimension {self.mass.dim} does not match state dimension {dim}"
            )
        return self.mass


def kinetic_energy(m, mass):
    """``K(m) = 0.5 m^T M^{-1} m`` for a diagonal mass matrix.

    Accepts a single vector or a stack of vectors along the leading axes.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 0:
        m = m.reshape(1)
    if m.ndim == 1:
        return 0.5 * float(m @ mass.inverse_apply(m))
    return 0.5 * np.sum(m * mass.inverse_apply(m), axis=-1)


def log_boltzmann(state, target: TargetModel, config):
    """Unnormalized ``log pi(theta, m) = -(U(theta) + K(m)) / T``.

    Raises :class:`NumericalInstability` if ``U`` is not finite.
    """
    u = target.potential(state.theta)
    if not np.isfinite(u):
        raise NumericalInstability(f"potential is not finite at theta={state.theta.tolist()}")
    k = kinetic_energy(state.momentum, config.mass_for(state.dim))
    return -(u + k) / config.temperature


def negate_momentum(state):
    return PhaseState(state.theta, -state.momentum)
