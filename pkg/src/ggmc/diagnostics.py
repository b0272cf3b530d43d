"""Chain summaries: moments, effective sample size, acceptance, energies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractViolation, kinetic_energy


@dataclass(frozen=True)
class ChainSummary:
    mean: np.ndarray
    variance: np.ndarray
    ess: np.ndarray
    acceptance_rate: float
    mean_accept_prob: float
    mean_potential: float
    mean_kinetic: float
    n_samples: int

    @property
    def standard_error(self):
        """Monte Carlo standard error of each coordinate's mean."""
        return np.sqrt(self.variance / self.ess)

    @property
    def variance_standard_error(self):
        """Approximate standard error of the sample variance.

        Uses the Gaussian fourth-moment formula ``sqrt(2 / ess) * var``.
        """
        return np.sqrt(2.0 / self.ess) * self.variance


def autocorrelation(x):
    """Normalized autocorrelation of a 1-d series via FFT."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    xc = x - x.mean()
    peak = np.max(np.abs(xc)) if n else 0.0
    if peak > 0:
        xc = xc / peak  # scale-free; keeps the FFT products from overflowing
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def effective_sample_size(x):
    """ESS by Geyer's initial positive sequence.

    Autocorrelations are summed in adjacent pairs until a pair sum turns
    non-positive. Constant series return 1. The result is capped at ``n``.
    Series with non-finite values (or whose variance overflows) give NaN.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ContractViolation("need at least 2 samples")
    with np.errstate(over="ignore", invalid="ignore"):
        spread = np.var(x)
    if not np.isfinite(spread):
        return float("nan")
    if np.all(x == x[0]):
        return 1.0
    rho = autocorrelation(x)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    tau = max(tau, 1.0 / n)
    return float(min(n / tau, n))


def summarize(samples, records=None, potentials=None, kinetics=None):
    """Per-coordinate moments and ESS plus acceptance and energy averages.

    ``samples`` is ``(n, d)`` (or ``(n,)``); ``records`` is a sequence of
    :class:`~ggmc.mh.AcceptanceRecord` or of booleans. Energies are optional.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise ContractViolation("summarize needs at least 2 samples")
    with np.errstate(over="ignore", invalid="ignore"):
        mean = x.mean(axis=0)
        variance = x.var(axis=0, ddof=1)
    ess = np.array([effective_sample_size(x[:, j]) for j in range(x.shape[1])])

    rate, prob = float("nan"), float("nan")
    if records is not None and len(records):
        flags, probs = [], []
        for r in records:
            if hasattr(r, "accepted"):
                flags.append(bool(r.accepted))
                probs.append(r.accept_prob)
            else:
                flags.append(bool(r))
        rate = float(np.mean(flags))
        if probs:
            prob = float(np.mean(probs))

    def _mean(v):
        if v is None:
            return float("nan")
        v = np.asarray(v, dtype=np.float64)
        return float(np.mean(v)) if v.size else float("nan")

    return ChainSummary(mean, variance, ess, rate, prob, _mean(potentials), _mean(kinetics), n)


def kinetic_temperature(momenta, mass):
    """Estimate ``T`` from momentum samples as ``2 mean(K) / d``."""
    m = np.asarray(momenta, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.shape[0] < 2:
        raise ContractViolation("need at least 2 momentum samples")
    return float(2.0 * np.mean(kinetic_energy(m, mass)) / m.shape[1])


def kinetic_temperature_standard_error(momenta, mass):
    """ESS-based standard error of :func:`kinetic_temperature`."""
    m = np.asarray(momenta, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    k = 2.0 * kinetic_energy(m, mass) / m.shape[1]
    return float(np.std(k, ddof=1) / np.sqrt(effective_sample_size(k)))
