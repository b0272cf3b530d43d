"""One-step transition kernels for underdamped Langevin dynamics.

All kernels are pure functions of their inputs. Randomness enters only
through the standard-normal ``noise`` arrays passed in by the caller, so a
step can be replayed exactly from its :class:`StepTrace`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import ContractViolation, NumericalInstability, PhaseState, all_finite


class IntegratorKind(str, enum.Enum):
    EULER_MARUYAMA = "euler_maruyama"
    OBABO = "obabo"
    LEAPFROG = "leapfrog"
    SGLD = "sgld"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("-", "_"))
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ContractViolation(f"unknown integrator {value!r}; choose one of {choices}") from None


@dataclass(frozen=True, eq=False)
class StepTrace:
    """Intermediate quantities of one OBABO (or leapfrog) step.

    Momenta are named after their position in the step: ``m_quarter`` after
    O.1, ``m_half`` after B.1, ``m_three_quarter`` after B.2. Fields after a
    failure point are ``None`` in partial traces.
    """

    theta_start: np.ndarray
    momentum_start: np.ndarray
    m_quarter: Optional[np.ndarray] = None
    m_half: Optional[np.ndarray] = None
    m_three_quarter: Optional[np.ndarray] = None
    theta_end: Optional[np.ndarray] = None
    momentum_end: Optional[np.ndarray] = None
    noise_1: Optional[np.ndarray] = None
    noise_2: Optional[np.ndarray] = None
    gradient_start: Optional[np.ndarray] = None
    gradient_end: Optional[np.ndarray] = None
    step_size: float = 0.0
    friction: float = 0.0

    @property
    def complete(self):
        return self.momentum_end is not None


def _require_finite(name, value, trace=None):
    if not all_finite(value):
        raise NumericalInstability(f"non-finite {name}", trace)
    return value


def o_step(m, a, temperature, mass, noise):
    """Exact Ornstein-Uhlenbeck refreshment ``sqrt(a) m + sqrt((1-a) T) M^{1/2} eps``."""
    if a == 1.0:
        return m
    return math.sqrt(a) * m + math.sqrt((1.0 - a) * temperature) * mass.sqrt_apply(noise)


def b_step(m, h, gradient):
    """Half kick ``m - (h/2) g``."""
    return m - (0.5 * h) * gradient


def a_step(theta, h, mass, m):
    """Drift ``theta + h M^{-1} m``."""
    return theta + h * mass.inverse_apply(m)


def _check_noise(noise, dim, name):
    if noise is None:
        raise ContractViolation(f"{name} is required when friction > 0")
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (dim,):
        raise ContractViolation(f"{name} must have shape ({dim},), got {noise.shape}")
    return noise


def step_obabo(state, target, config, noises=None, batch=None, grad_start=None):
    """One GGMC step: O.1, B.1, A, B.2, O.2.

    ``noises`` is the pair ``(eps, eps_prime)`` of standard-normal vectors; it
    may be omitted when ``friction == 0`` since the O steps are then
    identities. ``batch`` selects the minibatch used for *both* half kicks
    (``None`` means exact gradients). ``grad_start`` lets callers reuse the
    gradient at ``state.theta`` from the previous step.

    Returns ``(new_state, trace)``. Raises :class:`NumericalInstability`
    carrying the partial trace if a gradient or the new state is not finite.
    """
    d = state.dim
    mass = config.mass_for(d)
    h = config.step_size
    a = config.momentum_permanence
    temp = config.temperature
    if a < 1.0:
        if noises is None:
            raise ContractViolation("noises are required when friction > 0")
        eps1 = _check_noise(noises[0], d, "noise_1")
        eps2 = _check_noise(noises[1], d, "noise_2")
    else:
        eps1 = eps2 = None

    theta, m = state.theta, state.momentum
    partial = dict(theta_start=theta, momentum_start=m, noise_1=eps1, noise_2=eps2,
                   step_size=h, friction=config.friction)

    m_q = o_step(m, a, temp, mass, eps1)
    partial["m_quarter"] = m_q
    g0 = target.gradient(theta, batch) if grad_start is None else grad_start
    g0 = np.asarray(g0, dtype=np.float64)
    partial["gradient_start"] = g0
    _require_finite("gradient at step start", g0, StepTrace(**partial))
    m_h = b_step(m_q, h, g0)
    partial["m_half"] = m_h
    theta1 = a_step(theta, h, mass, m_h)
    partial["theta_end"] = theta1
    _require_finite("position after drift", theta1, StepTrace(**partial))
    g1 = np.asarray(target.gradient(theta1, batch), dtype=np.float64)
    partial["gradient_end"] = g1
    _require_finite("gradient at step end", g1, StepTrace(**partial))
    m_tq = b_step(m_h, h, g1)
    partial["m_three_quarter"] = m_tq
    m1 = o_step(m_tq, a, temp, mass, eps2)
    partial["momentum_end"] = m1
    trace = StepTrace(**partial)
    _require_finite("momentum after step", m1, trace)
    return PhaseState(theta1, m1), trace


def step_leapfrog(state, target, config, batch=None, grad_start=None):
    """One leapfrog step (B, A, B); identical to :func:`step_obabo` at zero friction."""
    if config.friction != 0.0:
        config = replace(config, friction=0.0)
    return step_obabo(state, target, config, None, batch=batch, grad_start=grad_start)


def replay(state, trace, config):
    """Recompute a step's output from the noises and gradients stored in ``trace``."""
    mass = config.mass_for(state.dim)
    h = trace.step_size
    a = math.exp(-trace.friction * h)
    temp = config.temperature
    m_q = o_step(state.momentum, a, temp, mass, trace.noise_1)
    m_h = b_step(m_q, h, trace.gradient_start)
    theta1 = a_step(state.theta, h, mass, m_h)
    m_tq = b_step(m_h, h, trace.gradient_end)
    m1 = o_step(m_tq, a, temp, mass, trace.noise_2)
    return PhaseState(theta1, m1)


def step_euler_maruyama(state, gradient, config, noise):
    """Symplectic Euler-Maruyama step as used by SGHMC.

    m' = (1 - h gamma) m - h g + sqrt(h) M^{1/2} sqrt(2 gamma T) eps
    theta' = theta + h M^{-1} m'

    ``gradient`` may be exact or stochastic.
    """
    d = state.dim
    mass = config.mass_for(d)
    h, gamma, temp = config.step_size, config.friction, config.temperature
    g = _require_finite("gradient", np.asarray(gradient, dtype=np.float64))
    if g.shape != (d,):
        raise ContractViolation(f"gradient must have shape ({d},), got {g.shape}")
    m = (1.0 - h * gamma) * state.momentum - h * g
    if gamma > 0.0:
        eps = _check_noise(noise, d, "noise")
        m = m + math.sqrt(h) * math.sqrt(2.0 * gamma * temp) * mass.sqrt_apply(eps)
    theta = state.theta + h * mass.inverse_apply(m)
    return PhaseState(theta, m)  # raises NumericalInstability on non-finite entries


def step_sgld(theta, target, config, noise, batch=None):
    """Infinite-friction limit of OBABO, with no momentum carried.

    theta' = theta + h M^{-1} (sqrt(T) M^{1/2} eps - (h/2) g)
    """
    theta = np.asarray(theta, dtype=np.float64)
    d = theta.shape[0]
    mass = config.mass_for(d)
    h = config.step_size
    eps = _check_noise(noise, d, "noise")
    g = _require_finite("gradient", np.asarray(target.gradient(theta, batch), dtype=np.float64))
    m = math.sqrt(config.temperature) * mass.sqrt_apply(eps)
    new = theta + h * mass.inverse_apply(m - (0.5 * h) * g)
    return _require_finite("position after SGLD step", new)


def check_backward_realizability_em(theta_n, m_n, theta_next, m_next, config, rtol=1e-12):
    """Whether an Euler-Maruyama transition can be retraced with negated momenta.

    Both ``theta_next = theta_n + h M^{-1} m_next`` (forward support) and
    ``theta_n = theta_next - h M^{-1} m_n`` (backward support) must hold.
    Given the first, the second holds exactly when ``m_n == m_next``.
    """
    theta_n, m_n = np.asarray(theta_n, float), np.asarray(m_n, float)
    theta_next, m_next = np.asarray(theta_next, float), np.asarray(m_next, float)
    mass = config.mass_for(theta_n.shape[0])
    h = config.step_size
    forward = theta_n + h * mass.inverse_apply(m_next)
    backward = theta_next + h * mass.inverse_apply(-m_n)
    # the backward condition is the one that fails in practice, so test it first
    return _close(theta_n, backward, rtol) and _close(theta_next, forward, rtol)


def _close(x, y, rtol):
    diff = float(np.abs(x - y).max())
    if diff <= rtol:
        return True
    return diff <= rtol * max(float(np.abs(x).max()), float(np.abs(y).max()))
