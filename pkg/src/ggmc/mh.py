"""Metropolis-Hastings acceptance for GGMC, single and deferred multi-step."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .core import ContractViolation, NumericalInstability, PhaseState, kinetic_energy
from .integrators import a_step, b_step, check_backward_realizability_em


@dataclass(frozen=True)
class AcceptanceRecord:
    """Outcome of one MH test.

    ``accepted`` is ``None`` until :func:`accept_reject` decides. For a
    multi-step record the kinetic fields hold sums over all inner steps.
    """

    log_alpha: float
    accepted: Optional[bool] = None
    potential_start: float = math.nan
    potential_end: float = math.nan
    kinetic_quarter: float = math.nan
    kinetic_three_quarter: float = math.nan
    temperature: float = 1.0
    n_steps: int = 1
    reason: str = ""

    @property
    def accept_prob(self):
        if math.isnan(self.log_alpha):
            return 0.0
        return math.exp(min(0.0, self.log_alpha))

    def recompute_log_alpha(self):
        return -(
            self.potential_end
            - self.potential_start
            + self.kinetic_three_quarter
            - self.kinetic_quarter
        ) / self.temperature


def ggmc_log_accept(trace, potential_start, potential_end, config):
    """Log acceptance ratio of one OBABO step.

    -(1/T) (U(theta') - U(theta) + K(m_{3/4}) - K(m_{1/4}))

    Friction does not enter. Non-finite inputs give ``-inf``.
    """
    if trace.m_three_quarter is None or trace.m_quarter is None:
        return -math.inf
    mass = config.mass_for(trace.m_quarter.shape[0])
    k_q = kinetic_energy(trace.m_quarter, mass)
    k_tq = kinetic_energy(trace.m_three_quarter, mass)
    value = -(potential_end - potential_start + k_tq - k_q) / config.temperature
    return value if np.isfinite(value) else -math.inf


@dataclass(frozen=True)
class OracleBreakdown:
    log_alpha: float
    log_boltzmann_ratio: float
    log_transition_ratio: float
    degenerate: bool
    backward_error: float

    @property
    def backward_realizable(self):
        return self.backward_error <= 1e-8


def _gaussian_log_density(r, scale_sq, normalized):
    if normalized:
        return float(np.sum(norm.logpdf(r, loc=0.0, scale=np.sqrt(scale_sq))))
    return float(-0.5 * np.sum(r * r / scale_sq))


def oracle_breakdown(theta_n, m_n, theta_next, m_next, trace, target, config,
                     batch=None, normalized=True):
    """Acceptance ratio assembled from explicit transition densities.

    The forward density of an OBABO step is a product of two Gaussians in the
    O-step increments ``r = m_{1/4} - sqrt(a) m_n`` and
    ``r' = m_{n+1} - sqrt(a) m_{3/4}``, each ``N(0, (1-a) T M)``, times a
    constant Jacobian factor. The backward density uses the time-reversed
    increments starting from ``(theta_next, -m_next)``. The Jacobian factor
    is common to both and dropped.

    With zero friction the O-step Gaussians are degenerate; the ratio is then
    that of a bare leapfrog step (transition ratio zero) and ``degenerate``
    is set.

    ``backward_error`` is the distance between ``theta_n`` and the position
    reached by replaying the reversed step with the backward increments.
    """
    theta_n, m_n = np.asarray(theta_n, float), np.asarray(m_n, float)
    theta_next, m_next = np.asarray(theta_next, float), np.asarray(m_next, float)
    mass = config.mass_for(theta_n.shape[0])
    temp = config.temperature
    h = trace.step_size
    a = math.exp(-trace.friction * h)
    m_q, m_tq = trace.m_quarter, trace.m_three_quarter

    u0, u1 = target.potential(theta_n), target.potential(theta_next)
    log_boltz = -(u1 - u0 + kinetic_energy(m_next, mass) - kinetic_energy(m_n, mass)) / temp

    # reverse the BAB core from (theta_next, -m_{3/4})
    back_m = b_step(-m_tq, h, target.gradient(theta_next, batch))
    back_theta = a_step(theta_next, h, mass, back_m)
    backward_error = float(np.max(np.abs(back_theta - theta_n)))

    if a == 1.0:
        return OracleBreakdown(log_boltz, log_boltz, 0.0, True, backward_error)

    var = (1.0 - a) * temp * mass.diag
    sa = math.sqrt(a)
    log_fwd = _gaussian_log_density(m_q - sa * m_n, var, normalized) + _gaussian_log_density(
        m_next - sa * m_tq, var, normalized
    )
    log_bwd = _gaussian_log_density(-m_tq + sa * m_next, var, normalized) + _gaussian_log_density(
        -m_n + sa * m_q, var, normalized
    )
    log_trans = log_bwd - log_fwd
    return OracleBreakdown(log_boltz + log_trans, log_boltz, log_trans, False, backward_error)


def oracle_log_accept(theta_n, m_n, theta_next, m_next, trace, target, config,
                      batch=None, normalized=True):
    return oracle_breakdown(
        theta_n, m_n, theta_next, m_next, trace, target, config, batch, normalized
    ).log_alpha


def em_log_accept(theta_n, m_n, theta_next, m_next, config, target, batch=None):
    """Log acceptance ratio of a symplectic Euler-Maruyama step.

    The backward move is supported only if ``m_next == m_n``; for any genuine
    step with ``h > 0`` and a non-degenerate noise draw this fails and the
    result is ``-inf``. On the measure-zero realizable set the ratio of the
    Gaussian momentum densities is returned.
    """
    if not check_backward_realizability_em(theta_n, m_n, theta_next, m_next, config):
        return -math.inf
    theta_n, m_n = np.asarray(theta_n, float), np.asarray(m_n, float)
    theta_next, m_next = np.asarray(theta_next, float), np.asarray(m_next, float)
    mass = config.mass_for(theta_n.shape[0])
    h, gamma, temp = config.step_size, config.friction, config.temperature
    g0, g1 = target.gradient(theta_n, batch), target.gradient(theta_next, batch)
    fwd_mean = (1.0 - h * gamma) * m_n - h * g0
    bwd_mean = (1.0 - h * gamma) * (-m_next) - h * g1
    u0, u1 = target.potential(theta_n), target.potential(theta_next)
    log_boltz = -(u1 - u0 + kinetic_energy(m_next, mass) - kinetic_energy(m_n, mass)) / temp
    if gamma == 0.0:
        ok = np.allclose(m_next, fwd_mean, rtol=1e-12, atol=1e-12) and np.allclose(
            -m_n, bwd_mean, rtol=1e-12, atol=1e-12
        )
        return log_boltz if ok else -math.inf
    var = 2.0 * h * gamma * temp * mass.diag
    log_fwd = _gaussian_log_density(m_next - fwd_mean, var, True)
    log_bwd = _gaussian_log_density(-m_n - bwd_mean, var, True)
    return log_boltz + log_bwd - log_fwd


def accept_reject(state_old, state_new, log_alpha, u):
    """Accept ``state_new`` iff ``log u < log_alpha``.

    On rejection the chain keeps ``theta_old`` with its momentum negated;
    with partial momentum refreshment this reversal is what keeps the
    Boltzmann distribution invariant.

    ``log_alpha`` may be a float or an :class:`AcceptanceRecord`.
    """
    if not 0.0 < u < 1.0:
        raise ContractViolation(f"uniform draw must lie in (0, 1), got {u!r}")
    record = log_alpha if isinstance(log_alpha, AcceptanceRecord) else AcceptanceRecord(
        float(log_alpha)
    )
    accepted = bool(math.log(u) < record.log_alpha)
    record = replace(record, accepted=accepted)
    if accepted:
        return state_new, record
    return PhaseState(state_old.theta, -state_old.momentum), record


# --- schedules -----------------------------------------------------------


@dataclass(frozen=True)
class ScheduleEntry:
    """Per-step integrator settings inside a multi-step round.

    ``batch`` is the sorted tuple of data indices used for both half kicks
    of the step, or ``None`` for exact gradients.
    """

    step_size: float
    friction: float
    noise_law: str = "standard_normal"
    batch: Optional[tuple] = None


def constant_schedule(n_steps, step_size, friction):
    return [ScheduleEntry(float(step_size), float(friction)) for _ in range(n_steps)]


def cosine_schedule(n_steps, max_step_size, min_step_size=0.0, friction=0.0):
    """Cosine-annealed step sizes, high at the start of the round and low at the end."""
    if n_steps < 1:
        raise ContractViolation("n_steps must be >= 1")
    out = []
    for i in range(n_steps):
        frac = i / n_steps
        h = min_step_size + 0.5 * (max_step_size - min_step_size) * (1.0 + math.cos(math.pi * frac))
        out.append(ScheduleEntry(h, float(friction)))
    return out


def with_batches(schedule, batches):
    if len(batches) != len(schedule):
        raise ContractViolation("need exactly one batch per schedule entry")
    return [
        replace(entry, batch=None if b is None else tuple(int(i) for i in b))
        for entry, b in zip(schedule, batches)
    ]


def validate_schedule_symmetry(schedule: Sequence[ScheduleEntry]):
    """True iff the schedule reads the same forwards and backwards.

    Step size, friction, noise law and minibatch must all match between step
    ``i`` and step ``N - i + 1``. Comparison is exact.
    """
    entries = list(schedule)
    n = len(entries)
    return all(entries[i] == entries[n - 1 - i] for i in range(n // 2))


# --- deferred acceptance ---------------------------------------------------


@dataclass
class MultiStepAccumulator:
    """Running log acceptance over a round of ``n_steps`` GGMC steps.

    Each recorded step contributes ``-(K(m_{3/4}) - K(m_{1/4})) / T``; the
    exact potential enters only at :func:`multi_step_finalize`, once for each
    endpoint.
    """

    start_state: PhaseState
    n_steps: int
    schedule: list
    config: object
    pre_drawn_noises: Optional[np.ndarray] = None
    steps_taken: int = 0
    log_alpha_sum: float = 0.0
    kinetic_quarter_sum: float = 0.0
    kinetic_three_quarter_sum: float = 0.0
    kinetic_terms: list = field(default_factory=list)
    failed: str = ""

    @property
    def symmetric(self):
        return validate_schedule_symmetry(self.schedule)

    @property
    def done(self):
        return self.steps_taken >= self.n_steps

    def config_for(self, i):
        entry = self.schedule[i]
        return replace(self.config, step_size=entry.step_size, friction=entry.friction)

    def batch_for(self, i):
        b = self.schedule[i].batch
        return None if b is None else np.asarray(b, dtype=np.intp)

    def noises_for(self, i, stream=None):
        if self.pre_drawn_noises is not None:
            return self.pre_drawn_noises[i, 0], self.pre_drawn_noises[i, 1]
        if stream is None:
            raise ContractViolation("a noise stream is required without pre-drawn noises")
        d = self.start_state.dim
        return stream.normal(d), stream.normal(d)


def multi_step_begin(state, n_steps, schedule, config, pre_draw=False, stream=None):
    """Open a deferred-acceptance round starting at ``state``.

    ``schedule`` may be ``None`` (constant at ``config``'s step size and
    friction). With ``pre_draw`` all ``2 * n_steps`` noise vectors are taken
    from ``stream`` up front.
    """
    if n_steps < 1:
        raise ContractViolation("n_steps must be >= 1")
    if schedule is None:
        schedule = constant_schedule(n_steps, config.step_size, config.friction)
    schedule = list(schedule)
    if len(schedule) != n_steps:
        raise ContractViolation(f"schedule has {len(schedule)} entries for {n_steps} steps")
    noises = None
    if pre_draw:
        if stream is None:
            raise ContractViolation("pre_draw requires a noise stream")
        noises = stream.normal((n_steps, 2, state.dim))
    return MultiStepAccumulator(state, n_steps, schedule, config, noises)


def multi_step_record(acc, trace):
    if acc.done:
        raise ContractViolation("round already has all its steps")
    entry = acc.schedule[acc.steps_taken]
    if trace.step_size != entry.step_size or trace.friction != entry.friction:
        raise ContractViolation(
            f"step {acc.steps_taken} does not follow the schedule entry {entry}"
        )
    mass = acc.config.mass_for(acc.start_state.dim)
    k_q = kinetic_energy(trace.m_quarter, mass)
    k_tq = kinetic_energy(trace.m_three_quarter, mass)
    term = -(k_tq - k_q) / acc.config.temperature
    acc.kinetic_terms.append(term)
    acc.kinetic_quarter_sum += k_q
    acc.kinetic_three_quarter_sum += k_tq
    acc.log_alpha_sum += term
    acc.steps_taken += 1
    return acc


def multi_step_fail(acc, reason):
    """Mark the round as failed (e.g. a non-finite gradient); it will be rejected."""
    acc.failed = reason
    return acc


def multi_step_finalize(acc, target, final_state):
    """Total log acceptance of the round, with ``accepted`` still undecided.

    Asymmetric schedules and failed rounds get ``-inf``.
    """
    temp = acc.config.temperature
    base = dict(
        temperature=temp,
        n_steps=acc.n_steps,
        kinetic_quarter=acc.kinetic_quarter_sum,
        kinetic_three_quarter=acc.kinetic_three_quarter_sum,
    )
    if acc.failed:
        return AcceptanceRecord(-math.inf, reason=acc.failed, **base)
    if not acc.done:
        raise ContractViolation(
            f"round finalized after {acc.steps_taken} of {acc.n_steps} steps"
        )
    if not acc.symmetric:
        return AcceptanceRecord(
            -math.inf,
            reason="schedule is not time-symmetric; the reversed round is not realizable",
            **base,
        )
    u0 = target.potential(acc.start_state.theta)
    u1 = target.potential(final_state.theta)
    if not (np.isfinite(u0) and np.isfinite(u1)):
        return AcceptanceRecord(-math.inf, potential_start=u0, potential_end=u1,
                                reason="non-finite potential", **base)
    log_alpha = -(u1 - u0) / temp + acc.log_alpha_sum
    return AcceptanceRecord(log_alpha, potential_start=u0, potential_end=u1, **base)


__all__ = [
    "AcceptanceRecord",
    "MultiStepAccumulator",
    "NumericalInstability",
    "OracleBreakdown",
    "ScheduleEntry",
    "accept_reject",
    "constant_schedule",
    "cosine_schedule",
    "em_log_accept",
    "ggmc_log_accept",
    "multi_step_begin",
    "multi_step_fail",
    "multi_step_finalize",
    "multi_step_record",
    "oracle_breakdown",
    "oracle_log_accept",
    "validate_schedule_symmetry",
    "with_batches",
]
