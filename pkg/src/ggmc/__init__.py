"""Gradient-guided Monte Carlo: Langevin integrators with exact MH correction."""

from .core import (
    ContractViolation,
    MassMatrix,
    NumericalInstability,
    PhaseState,
    SamplerConfig,
    kinetic_energy,
    log_boltzmann,
    negate_momentum,
)
from .diagnostics import ChainSummary, effective_sample_size, kinetic_temperature, summarize
from .hyperparams import (
    SGDParams,
    em_sampler_to_sgd,
    sampler_to_sgd,
    sgd_to_em_sampler,
    sgd_to_sampler,
)
from .integrators import (
    IntegratorKind,
    StepTrace,
    check_backward_realizability_em,
    replay,
    step_euler_maruyama,
    step_leapfrog,
    step_obabo,
    step_sgld,
)
from .mh import (
    AcceptanceRecord,
    MultiStepAccumulator,
    ScheduleEntry,
    accept_reject,
    constant_schedule,
    cosine_schedule,
    em_log_accept,
    ggmc_log_accept,
    multi_step_begin,
    multi_step_finalize,
    multi_step_record,
    oracle_log_accept,
    validate_schedule_symmetry,
)
from .rng import NoiseStream
from .sampler import ChainResult, Correction, run_chain, run_chains, run_mala
from .targets import (
    MinibatchSchedule,
    TargetModel,
    make_banana,
    make_gaussian,
    make_harmonic_oscillator,
    make_logistic_regression,
    make_synthetic_logistic_data,
    next_batch,
)

__version__ = "0.1.0"
