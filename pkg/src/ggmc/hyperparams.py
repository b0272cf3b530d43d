"""Conversions between sampler (h, gamma) and SGD (learning rate, momentum) settings.

For GGMC the momentum coefficient equals the momentum permanence
``a = exp(-gamma h)`` and the learning rate is ``N h^2``. The symplectic
Euler-Maruyama scheme instead damps by ``1 - gamma h`` per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

from .core import ContractViolation
from .integrators import IntegratorKind


@dataclass(frozen=True)
class SGDParams:
    learning_rate: float
    momentum: float
    data_size: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ContractViolation(f"learning_rate must be > 0, got {self.learning_rate!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ContractViolation(f"momentum must lie in [0, 1), got {self.momentum!r}")
        if int(self.data_size) != self.data_size or self.data_size < 1:
            raise ContractViolation(f"data_size must be a positive integer, got {self.data_size!r}")


class SamplerParams(NamedTuple):
    step_size: float
    friction: Optional[float]
    integrator: IntegratorKind


def _step_size(p):
    return math.sqrt(p.learning_rate / p.data_size)


def sgd_to_sampler(p: SGDParams) -> SamplerParams:
    """``h = sqrt(lr / N)``, ``gamma = -sqrt(N / lr) log(beta)``.

    ``beta = 0`` is the infinite-friction limit and selects the SGLD
    integrator with ``friction=None``.
    """
    h = _step_size(p)
    if p.momentum == 0.0:
        return SamplerParams(h, None, IntegratorKind.SGLD)
    gamma = -math.sqrt(p.data_size / p.learning_rate) * math.log(p.momentum)
    return SamplerParams(h, gamma, IntegratorKind.OBABO)


def sampler_to_sgd(step_size, friction, data_size=1) -> SGDParams:
    """``lr = N h^2``, ``beta = exp(-gamma h)``.

    ``friction == 0`` gives ``beta == 1``, the Hamiltonian (HMC) regime, which
    lies outside :class:`SGDParams`; use :func:`momentum_from_friction` to
    inspect it.
    """
    if not (math.isfinite(step_size) and step_size > 0):
        raise ContractViolation("step_size must be > 0")
    if friction is None or friction < 0:
        raise ContractViolation("friction must be >= 0")
    beta = momentum_from_friction(step_size, friction)
    if beta >= 1.0:
        raise ContractViolation("zero friction maps to momentum 1 (HMC regime), outside SGD range")
    return SGDParams(data_size * step_size**2, beta, data_size)


def momentum_from_friction(step_size, friction):
    return math.exp(-friction * step_size)


def sgd_to_em_sampler(p: SGDParams) -> SamplerParams:
    """Euler-Maruyama mapping: ``h = sqrt(lr / N)``, ``gamma = (1 - beta) sqrt(N / lr)``."""
    if p.momentum >= 1.0:
        raise ContractViolation("momentum must be < 1")
    h = _step_size(p)
    gamma = (1.0 - p.momentum) * math.sqrt(p.data_size / p.learning_rate)
    return SamplerParams(h, gamma, IntegratorKind.EULER_MARUYAMA)


def em_sampler_to_sgd(step_size, friction, data_size=1) -> SGDParams:
    """Inverse of :func:`sgd_to_em_sampler`: ``beta = 1 - gamma h``."""
    if not (math.isfinite(step_size) and step_size > 0):
        raise ContractViolation("step_size must be > 0")
    beta = 1.0 - friction * step_size
    if -1e-12 < beta < 0.0:
        beta = 0.0  # rounding in gamma * h when the forward map started from beta = 0
    if not 0.0 <= beta < 1.0:
        raise ContractViolation(f"gamma * h = {friction * step_size} gives momentum outside [0, 1)")
    return SGDParams(data_size * step_size**2, beta, data_size)
