"""Chain drivers tying integrators, acceptance tests and noise streams together."""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import mh
from .core import ContractViolation, NumericalInstability, PhaseState, kinetic_energy
from .diagnostics import summarize
from .integrators import (
    IntegratorKind,
    step_euler_maruyama,
    step_obabo,
    step_sgld,
)
from .rng import NoiseStream
from .targets import MinibatchSchedule

log = logging.getLogger(__name__)


class Correction(str, enum.Enum):
    NONE = "none"
    PER_STEP = "per_step"
    MULTI_STEP = "multi_step"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("-", "_"))
        except ValueError:
            raise ContractViolation(
                f"unknown correction {value!r}; choose none, per_step or multi_step"
            ) from None


CORRECTABLE = (IntegratorKind.OBABO, IntegratorKind.LEAPFROG)


def check_pairing(integrator, correction):
    """Reject integrator/correction pairs that cannot be MH corrected."""
    integrator = IntegratorKind.parse(integrator)
    correction = Correction.parse(correction)
    if correction is not Correction.NONE and integrator not in CORRECTABLE:
        if integrator is IntegratorKind.EULER_MARUYAMA:
            raise ContractViolation(
                "euler_maruyama cannot be MH corrected: its backward transition is not "
                "realizable, so the acceptance probability is zero with probability 1 "
                "(see the theorem1-demo subcommand)"
            )
        raise ContractViolation(
            f"{integrator.value} does not carry momentum; use obabo with large friction "
            "for a corrected overdamped sampler"
        )
    return integrator, correction


@dataclass
class ChainResult:
    """Retained samples and per-round acceptance data of one chain.

    ``theta``, ``momentum``, ``potential``, ``kinetic``, ``log_alpha``,
    ``accepted`` and ``step`` hold the thinned samples. ``all_log_alpha`` and
    ``all_accepted`` cover every MH round.
    """

    theta: np.ndarray
    momentum: np.ndarray
    potential: np.ndarray
    kinetic: np.ndarray
    log_alpha: np.ndarray
    accepted: np.ndarray
    step: np.ndarray
    all_log_alpha: np.ndarray
    all_accepted: np.ndarray
    final_state: Optional[PhaseState] = None
    error: Optional[str] = None
    forced_rejections: int = 0

    @property
    def acceptance_rate(self):
        return float(np.mean(self.all_accepted)) if self.all_accepted.size else math.nan

    @property
    def mean_accept_prob(self):
        la = self.all_log_alpha
        if not la.size:
            return math.nan
        with np.errstate(over="ignore", invalid="ignore"):
            p = np.exp(np.minimum(la, 0.0))
        return float(np.mean(np.where(np.isnan(la), 0.0, p)))

    def summary(self):
        s = summarize(self.theta, self.all_accepted, self.potential, self.kinetic)
        return replace(s, mean_accept_prob=self.mean_accept_prob)


class _Recorder:
    def __init__(self, thin):
        self.thin = max(int(thin), 1)
        self.rows = []
        self.all_log_alpha = []
        self.all_accepted = []
        self.rounds = 0

    def add(self, step, theta, momentum, potential, kinetic, log_alpha, accepted):
        self.all_log_alpha.append(log_alpha)
        self.all_accepted.append(accepted)
        self.rounds += 1
        if self.rounds % self.thin == 0:
            self.rows.append((step, theta, momentum, potential, kinetic, log_alpha, accepted))

    def result(self, dim, final_state, error, forced):
        n = len(self.rows)
        theta = np.empty((n, dim))
        momentum = np.empty((n, dim))
        cols = [np.empty(n) for _ in range(3)]
        accepted = np.empty(n, dtype=bool)
        step = np.empty(n, dtype=np.int64)
        for i, (s, th, m, u, k, la, acc) in enumerate(self.rows):
            step[i], theta[i], momentum[i] = s, th, m
            cols[0][i], cols[1][i], cols[2][i], accepted[i] = u, k, la, acc
        return ChainResult(
            theta, momentum, cols[0], cols[1], cols[2], accepted, step,
            np.asarray(self.all_log_alpha, dtype=np.float64),
            np.asarray(self.all_accepted, dtype=bool),
            final_state, error, forced,
        )


def _initial_state(target, config, stream, theta0):
    d = target.dim
    theta = np.zeros(d) if theta0 is None else np.asarray(theta0, dtype=np.float64)
    if theta.shape != (d,):
        raise ContractViolation(f"initial theta must have shape ({d},)")
    mass = config.mass_for(d)
    m = math.sqrt(config.temperature) * mass.sqrt_apply(stream.normal(d))
    return PhaseState(theta, m)


def _fresh_momentum(state, config, stream):
    mass = config.mass_for(state.dim)
    return PhaseState(
        state.theta, math.sqrt(config.temperature) * mass.sqrt_apply(stream.normal(state.dim))
    )


def run_chain(
    target,
    config,
    n_steps,
    *,
    integrator="obabo",
    correction="per_step",
    multi_step_n=10,
    stream=None,
    seed=0,
    theta0=None,
    batch_size=None,
    batch_seed=None,
    refresh="partial",
    pre_draw=False,
    thin=1,
    schedule=None,
):
    """Run one chain for ``n_steps`` integrator steps.

    Correction modes:

    * ``none``: every proposal is kept. For OBABO and leapfrog the log
      acceptance is still computed against the exact potential so the
      discretisation error can be monitored.
    * ``per_step``: an MH test after every step.
    * ``multi_step``: ``multi_step_n`` steps per MH test, possibly with
      minibatch gradients; exact potentials only at the round's endpoints.

    The leapfrog integrator draws a fresh momentum at the start of each
    round, so ``multi_step`` with leapfrog is HMC with ``multi_step_n``
    leapfrog steps per trajectory. With OBABO, ``refresh="full"`` does the
    same; the default ``"partial"`` relies on the O steps alone.

    ``batch_size`` switches to minibatch gradients. In ``multi_step`` mode the
    batches of each round are palindromic, so the round is time-symmetric.
    ``schedule`` optionally overrides the per-step (h, gamma) entries of a
    multi-step round; an asymmetric schedule gets zero acceptance.

    Samples are recorded once per MH round (once per step without
    correction), keeping every ``thin``-th.
    """
    integrator, correction = check_pairing(integrator, correction)
    if stream is None:
        stream = NoiseStream(seed)
    if refresh not in ("partial", "full"):
        raise ContractViolation("refresh must be 'partial' or 'full'")
    if n_steps < 0:
        raise ContractViolation("n_steps must be >= 0")
    batches = None
    if batch_size is not None and batch_size < target.data_size:
        batches = MinibatchSchedule(
            target.data_size, batch_size, seed if batch_seed is None else batch_seed
        )
    if integrator is IntegratorKind.LEAPFROG:
        config = replace(config, friction=0.0)
    config = replace(config, mass=config.mass_for(target.dim))

    state = _initial_state(target, config, stream, theta0)
    rec = _Recorder(thin)
    if integrator is IntegratorKind.EULER_MARUYAMA:
        return _run_em(target, config, n_steps, stream, state, batches, rec)
    if integrator is IntegratorKind.SGLD:
        return _run_sgld(target, config, n_steps, stream, state, batches, rec)

    full_refresh = integrator is IntegratorKind.LEAPFROG or refresh == "full"
    if correction is Correction.MULTI_STEP:
        return _run_multi(
            target, config, n_steps, multi_step_n, stream, state, batches, rec,
            full_refresh, pre_draw, schedule,
        )
    return _run_single(target, config, n_steps, stream, state, batches, rec,
                       correction is Correction.PER_STEP, full_refresh)


def _run_single(target, config, n_steps, stream, state, batches, rec, corrected, full_refresh):
    d = target.dim
    mass = config.mass_for(d)
    a = config.momentum_permanence
    u_cur = target.potential(state.theta)
    g_cache = None
    forced = 0
    for i in range(n_steps):
        if full_refresh:
            state = _fresh_momentum(state, config, stream)
        noises = (stream.normal(d), stream.normal(d)) if a < 1.0 else None
        batch = None if batches is None else batches.next_batch()
        g0 = g_cache if batch is None else None
        try:
            new, trace = step_obabo(state, target, config, noises, batch=batch, grad_start=g0)
            u_new = target.potential(new.theta)
            if not np.isfinite(u_new):
                raise NumericalInstability("non-finite potential", trace)
        except NumericalInstability as exc:
            if not corrected:
                return rec.result(d, state, f"step {i}: {exc}", forced)
            forced += 1
            state = PhaseState(state.theta, -state.momentum)
            rec.add(i + 1, state.theta, state.momentum, u_cur,
                    kinetic_energy(state.momentum, mass), -math.inf, False)
            stream.uniform()  # keep the stream aligned with an ordinary MH round
            g_cache = None
            continue
        log_alpha = mh.ggmc_log_accept(trace, u_cur, u_new, config)
        if corrected:
            state, record = mh.accept_reject(state, new, log_alpha, stream.uniform())
            accepted = record.accepted
        else:
            state, accepted = new, True
        if accepted:
            u_cur = u_new
            g_cache = trace.gradient_end
        else:
            g_cache = trace.gradient_start
        rec.add(i + 1, state.theta, state.momentum, u_cur,
                kinetic_energy(state.momentum, mass), log_alpha, accepted)
    return rec.result(d, state, None, forced)


def _run_multi(target, config, n_steps, n_inner, stream, state, batches, rec,
               full_refresh, pre_draw, schedule):
    if n_inner < 1:
        raise ContractViolation("multi_step_n must be >= 1")
    d = target.dim
    mass = config.mass_for(d)
    n_rounds = n_steps // n_inner
    if n_steps % n_inner:
        log.warning("dropping %d trailing steps that do not fill a round", n_steps % n_inner)
    forced = 0
    for r in range(n_rounds):
        if full_refresh:
            state = _fresh_momentum(state, config, stream)
        sched = list(schedule) if schedule is not None else mh.constant_schedule(
            n_inner, config.step_size, config.friction
        )
        if batches is not None:
            sched = mh.with_batches(sched, batches.palindromic_batches(n_inner))
        acc = mh.multi_step_begin(state, n_inner, sched, config, pre_draw=pre_draw, stream=stream)
        cur = state
        g_cache, cache_batch = None, None
        for i in range(n_inner):
            cfg = acc.config_for(i)
            noises = acc.noises_for(i, stream) if cfg.momentum_permanence < 1.0 else None
            entry = acc.schedule[i]
            batch = acc.batch_for(i)
            g0 = g_cache if entry.batch == cache_batch else None
            try:
                cur, trace = step_obabo(cur, target, cfg, noises, batch=batch, grad_start=g0)
            except NumericalInstability as exc:
                mh.multi_step_fail(acc, f"round {r} step {i}: {exc}")
                break
            g_cache, cache_batch = trace.gradient_end, entry.batch
            mh.multi_step_record(acc, trace)
        record = mh.multi_step_finalize(acc, target, cur)
        if acc.failed:
            forced += 1
        state, record = mh.accept_reject(state, cur, record, stream.uniform())
        u_cur = record.potential_end if record.accepted else target.potential(state.theta)
        rec.add((r + 1) * n_inner, state.theta, state.momentum, u_cur,
                kinetic_energy(state.momentum, mass), record.log_alpha, record.accepted)
    return rec.result(d, state, None, forced)


def _run_em(target, config, n_steps, stream, state, batches, rec):
    d = target.dim
    mass = config.mass_for(d)
    for i in range(n_steps):
        batch = None if batches is None else batches.next_batch()
        g = target.gradient(state.theta, batch)
        noise = stream.normal(d) if config.friction > 0 else None
        try:
            new = step_euler_maruyama(state, g, config, noise)
        except NumericalInstability as exc:
            return rec.result(d, state, f"step {i}: {exc}", 0)
        log_alpha = mh.em_log_accept(state.theta, state.momentum, new.theta, new.momentum,
                                     config, target, batch)
        state = new
        rec.add(i + 1, state.theta, state.momentum, target.potential(state.theta),
                kinetic_energy(state.momentum, mass), log_alpha, True)
    return rec.result(d, state, None, 0)


def _run_sgld(target, config, n_steps, stream, state, batches, rec):
    d = target.dim
    theta = state.theta
    nan_m = np.full(d, np.nan)
    for i in range(n_steps):
        batch = None if batches is None else batches.next_batch()
        try:
            theta = step_sgld(theta, target, config, stream.normal(d), batch=batch)
        except NumericalInstability as exc:
            return rec.result(d, None, f"step {i}: {exc}", 0)
        rec.add(i + 1, theta, nan_m, target.potential(theta), math.nan, math.nan, True)
    return rec.result(d, PhaseState(theta, np.zeros(d)), None, 0)


def run_chains(target, config, n_steps, n_chains=1, seed=0, max_workers=None, **kwargs):
    """Run independent chains on disjoint noise streams, one thread each."""
    streams = NoiseStream.for_chains(seed, n_chains)
    batch_seed = kwargs.pop("batch_seed", None)

    def one(i):
        bs = (seed if batch_seed is None else batch_seed) + i
        return run_chain(target, config, n_steps, stream=streams[i], seed=seed,
                         batch_seed=bs, **kwargs)

    if n_chains == 1:
        return [one(0)]
    with ThreadPoolExecutor(max_workers=max_workers or n_chains) as pool:
        return list(pool.map(one, range(n_chains)))


@dataclass
class MALAResult:
    theta: np.ndarray
    accepted: np.ndarray = field(repr=False)

    @property
    def acceptance_rate(self):
        return float(np.mean(self.accepted))


def run_mala(target, step_size, n_steps, *, temperature=1.0, mass=None, stream=None,
             seed=0, theta0=None):
    """Metropolis-adjusted Langevin with exact gradients.

    Proposal ``theta' = theta - (h^2 / 2) M^{-1} grad U + h sqrt(T) M^{-1/2} eps``;
    the acceptance ratio uses the Gaussian proposal densities directly.
    """
    if stream is None:
        stream = NoiseStream(seed)
    d = target.dim
    inv_mass = np.ones(d) if mass is None else 1.0 / mass.diag
    h2 = step_size * step_size
    var = h2 * temperature * inv_mass

    def log_q(to, frm, g_frm):
        mu = frm - 0.5 * h2 * inv_mass * g_frm
        r = to - mu
        return -0.5 * np.sum(r * r / var)

    theta = np.zeros(d) if theta0 is None else np.asarray(theta0, dtype=np.float64)
    u = target.potential(theta)
    g = target.grad(theta)
    out = np.empty((n_steps, d))
    accepted = np.empty(n_steps, dtype=bool)
    for i in range(n_steps):
        prop = theta - 0.5 * h2 * inv_mass * g + np.sqrt(var) * stream.normal(d)
        u_p = target.potential(prop)
        g_p = target.grad(prop)
        log_a = -(u_p - u) / temperature + log_q(theta, prop, g_p) - log_q(prop, theta, g)
        ok = np.isfinite(log_a) and math.log(stream.uniform()) < log_a
        if ok:
            theta, u, g = prop, u_p, g_p
        out[i] = theta
        accepted[i] = ok
    return MALAResult(out, accepted)
