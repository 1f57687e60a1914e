"""Reproducible high-throughput sampling of the log normalized squared norm.

Stream discipline
-----------------
Trials are processed in fixed blocks of ``CHUNK`` consecutive trial indices.
Block c draws from a dedicated generator seeded by hashing
``(seed, domain, c)`` through numpy's SeedSequence, and consumes randomness
in a fixed order: for each layer, the mask uniforms for every trial of the
block, then the full weight block.  A trial's outcome is therefore a pure
function of (seed, config, trial index) — independent of how many trials were
requested, of the trial window, and of how blocks are scheduled across
threads.  Results are reduced by sorting, so any thread count produces the
same batch.

Dead trials (zero events) keep consuming their share of draws, which keeps
stream consumption outcome-independent.

The ``MATPROD_THREADS`` environment variable caps worker threads; the default
is the machine's CPU count.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleConfig, UnitVector
from .errors import EmptyBatch, InsufficientSamples
from .ksstats import normal_cdf, one_sample_ks

CHUNK = 256

# Stream domains keep samplers with the same user seed independent.
DOMAIN_PRODUCT = 1
DOMAIN_CHI2 = 2
DOMAIN_NETS = 3

# Chi-square draws: exact sum of squared normals up to this dof, gamma
# rejection sampling above it.
CHI2_EXACT_DOF = 32


def resolve_threads(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("MATPROD_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def chunk_stream(seed: int, domain: int, index: int) -> np.random.Generator:
    """Dedicated generator for one block, derived by hashing the identifiers."""
    ss = np.random.SeedSequence((int(seed), int(domain), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SampleBatch:
    """Sorted log-norm samples plus the zero-event counter and provenance."""

    samples: np.ndarray
    zero_event_count: int
    trials: int
    seed: int
    fingerprint: str

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if samples.size + self.zero_event_count != self.trials:
            raise ValueError("samples + zero events must equal trials")
        if samples.size > 1 and np.any(np.diff(samples) < 0):
            raise ValueError("samples must be sorted ascending")

    @property
    def zero_event_rate(self) -> float:
        return self.zero_event_count / self.trials if self.trials else 0.0


@dataclass(frozen=True)
class MomentEstimate:
    k: int
    estimate: float
    stderr: float
    trials: int


def batch_fingerprint(config: EnsembleConfig, u: UnitVector) -> str:
    u_tag = hashlib.sha256(u.coords.tobytes()).hexdigest()[:8]
    text = f"{config.fingerprint()};u={u.label}:{u_tag}"
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _product_chunk(config: EnsembleConfig, u0: np.ndarray, rng: np.random.Generator):
    """Propagate one block of CHUNK trials; returns (log norms, alive flags)."""
    widths = config.widths
    p = config.p_float
    law = config.entry_law
    u = np.broadcast_to(u0, (CHUNK, widths[0])).copy()
    logs = np.zeros(CHUNK)
    alive = np.ones(CHUNK, dtype=bool)
    for i in range(1, len(widths)):
        n, m = widths[i], widths[i - 1]
        mask = rng.random((CHUNK, n)) < p
        weights = law.sample(rng, (CHUNK, n, m))
        v = np.matmul(weights, u[:, :, None])[:, :, 0]
        v *= mask
        # normalize the squared norm, not the vector: exactly representable
        # norms stay exact through the log
        raw_sq = np.einsum("ci,ci->c", v, v)
        alive &= raw_sq > 0.0
        safe = np.where(alive, raw_sq, 1.0)
        logs += np.where(alive, np.log(safe / (p * n)), 0.0)
        u = v / np.sqrt(safe)[:, None]
        u[~alive] = 0.0
    return logs, alive


def _collect_chunks(
    trials: int,
    trial_offset: int,
    threads: int | None,
    chunk_fn,
):
    """Run chunk_fn over every block intersecting the trial window."""
    lo, hi = trial_offset, trial_offset + trials
    if trials == 0:
        return np.empty(0), 0
    first, last = lo // CHUNK, (hi - 1) // CHUNK
    indices = range(first, last + 1)
    workers = min(resolve_threads(threads), len(indices))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(chunk_fn, indices))
    else:
        results = [chunk_fn(c) for c in indices]
    samples = []
    zero_events = 0
    for c, (logs, alive) in zip(indices, results):
        start = max(lo - c * CHUNK, 0)
        stop = min(hi - c * CHUNK, CHUNK)
        window_alive = alive[start:stop]
        samples.append(logs[start:stop][window_alive])
        zero_events += int(np.size(window_alive) - np.count_nonzero(window_alive))
    merged = np.sort(np.concatenate(samples))
    return merged, zero_events


def run_trials(
    config: EnsembleConfig,
    u: UnitVector,
    trials: int,
    seed: int,
    trial_offset: int = 0,
    threads: int | None = None,
) -> SampleBatch:
    """Sample `trials` independent realizations of the log normalized norm.

    Zero events are counted, not raised.  Identical (config, u, seed, trial
    window) always produce the identical batch, for any thread count.
    """
    if trials < 0:
        raise ValueError("trials must be nonnegative")
    if u.dim != config.widths[0]:
        raise ValueError(f"u has dim {u.dim}, architecture starts at {config.widths[0]}")
    u0 = u.coords

    def chunk_fn(index: int):
        rng = chunk_stream(seed, DOMAIN_PRODUCT, index)
        return _product_chunk(config, u0, rng)

    samples, zero_events = _collect_chunks(trials, trial_offset, threads, chunk_fn)
    return SampleBatch(
        samples=samples,
        zero_event_count=zero_events,
        trials=trials,
        seed=seed,
        fingerprint=batch_fingerprint(config, u),
    )


def empirical_moment(batch: SampleBatch, k: int) -> MomentEstimate:
    """Mean of exp(k * log norm) over all trials; zero events contribute 0."""
    if batch.trials < 2:
        raise InsufficientSamples("moment estimation needs at least two trials")
    values = np.exp(k * batch.samples)
    n = batch.trials
    total = float(np.sum(values))
    mean = total / n
    # sample variance over all trials, zero events included as exact zeros
    sq_total = float(values @ values)
    var = (sq_total - n * mean * mean) / (n - 1)
    var = max(var, 0.0)
    return MomentEstimate(k=k, estimate=mean, stderr=math.sqrt(var / n), trials=n)


def ks_to_gaussian(batch: SampleBatch, mean: float, variance: float) -> float:
    """One-sample KS distance of the batch to Normal(mean, variance).

    Zero events carry no log value and are excluded here; their count stays
    on the batch for separate reporting.
    """
    if batch.samples.size == 0:
        raise EmptyBatch("KS statistic needs at least one sample")
    if variance <= 0.0:
        raise ValueError("variance must be positive")
    scale = 1.0 / math.sqrt(variance)
    z = (batch.samples - mean) * scale
    return one_sample_ks(z, lambda t: normal_cdf(t))


def _chi2_chunk(widths, rng: np.random.Generator):
    logs = np.zeros(CHUNK)
    for n in widths:
        if n <= CHI2_EXACT_DOF:
            z = rng.standard_normal((CHUNK, n))
            draw = np.einsum("ci,ci->c", z, z)
        else:
            draw = 2.0 * rng.standard_gamma(n / 2.0, size=CHUNK)
        logs += np.log(draw / n)
    return logs, np.ones(CHUNK, dtype=bool)


def chi_square_product_sampler(
    widths,
    trials: int,
    seed: int,
    trial_offset: int = 0,
    threads: int | None = None,
) -> SampleBatch:
    """Samples of the log of a product of independent chi-square/dof ratios.

    One factor per width; an empty width list gives identically zero samples.
    Small dof is drawn as an exact sum of squared normals, large dof through
    numpy's gamma rejection sampler.
    """
    widths = tuple(int(n) for n in widths)
    if any(n < 1 for n in widths):
        raise ValueError("widths must be positive")
    if trials < 0:
        raise ValueError("trials must be nonnegative")

    def chunk_fn(index: int):
        rng = chunk_stream(seed, DOMAIN_CHI2, index)
        return _chi2_chunk(widths, rng)

    samples, zero_events = _collect_chunks(trials, trial_offset, threads, chunk_fn)
    tag = hashlib.sha256(f"chi2;widths={widths}".encode()).hexdigest()[:12]
    return SampleBatch(
        samples=samples,
        zero_event_count=zero_events,
        trials=trials,
        seed=seed,
        fingerprint=tag,
    )
