"""Monte Carlo estimators used as independent checks on the analytical values.

Trials are split into fixed-size chunks, each with its own child seed from a
``SeedSequence``; the success count is an integer sum, so the estimate does
not depend on how chunks are scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from xecrel.errors import ConfigError
from xecrel.probkernel import spawn_rngs
from xecrel.reliability import DeviceModel, check_theta
from xecrel.system import Allocation, DevicePool

CHUNK = 1 << 18
MIN_TRIALS = 1000


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    n_samples: int
    ci_lo: float
    ci_hi: float
    seed: int

    @classmethod
    def from_count(cls, hits: int, n: int, seed) -> "McEstimate":
        p = hits / n
        half = band_halfwidth(p, n)
        return cls(p, n, max(0.0, p - half), min(1.0, p + half), seed)

    @property
    def halfwidth(self) -> float:
        return band_halfwidth(self.estimate, self.n_samples)

    def covers(self, value: float, slack: float = 0.0) -> bool:
        return self.ci_lo - slack <= value <= self.ci_hi + slack

    def to_dict(self) -> dict:
        return asdict(self)


def band_halfwidth(p: float, n: int, k: float = 3.0) -> float:
    """``k`` binomial standard errors."""
    return k * math.sqrt(max(p * (1.0 - p), 0.0) / n)


def _count(trial: Callable[[np.random.Generator, int], np.ndarray], n: int, seed, workers: int) -> int:
    if n < MIN_TRIALS:
        raise ConfigError(f"need at least {MIN_TRIALS} trials, got {n}", path="n")
    sizes = [CHUNK] * (n // CHUNK)
    if n % CHUNK:
        sizes.append(n % CHUNK)
    rngs = spawn_rngs(seed, len(sizes))

    def run(k):
        return int(np.count_nonzero(trial(rngs[k], sizes[k])))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return sum(ex.map(run, range(len(sizes))))
    return sum(run(k) for k in range(len(sizes)))


def _device_success(dev: DeviceModel, theta: float, rng: np.random.Generator, m: int) -> np.ndarray:
    c = dev.capacity.sample(rng, m)
    d = dev.demand.sample(rng, m)
    return c >= theta * d


def mc_single_reliability(device: DeviceModel, theta, n: int, seed: int, workers: int = 1) -> McEstimate:
    """Fraction of ``n`` independent (C, D) draws with ``C / D >= theta``."""
    theta = check_theta(theta)
    hits = _count(lambda rng, m: _device_success(device, theta, rng, m), n, seed, workers)
    return McEstimate.from_count(hits, n, seed)


def mc_system_reliability(
    pool: DevicePool, configuration, theta, n: int, seed: int, workers: int = 1
) -> McEstimate:
    """Per trial, draw every device's (C, D) pair and test the configuration predicate.

    ``configuration`` is ``"series"``, ``"parallel"``, an ``Allocation`` or
    ``("partitioned", Allocation)``.  For series, ``theta`` may be a
    per-device sequence.
    """
    devices = list(pool)
    if isinstance(configuration, tuple) and configuration[0] == "partitioned":
        configuration = configuration[1]
    if isinstance(configuration, Allocation):
        if len(configuration) != len(devices):
            raise ConfigError("allocation does not match pool size", path="fractions")
        base = check_theta(theta)
        thetas = [a * base for a in configuration.fractions]
        combine = np.logical_and
    elif configuration == "series":
        thetas = [check_theta(theta)] * len(devices) if np.ndim(theta) == 0 else [check_theta(t) for t in theta]
        combine = np.logical_and
    elif configuration == "parallel":
        thetas = [check_theta(theta)] * len(devices)
        combine = np.logical_or
    else:
        raise ConfigError(f"unknown configuration {configuration!r}", path="configuration")

    def trial(rng, m):
        out = _device_success(devices[0], thetas[0], rng, m)
        for dev, t in zip(devices[1:], thetas[1:]):
            out = combine(out, _device_success(dev, t, rng, m))
        return out

    hits = _count(trial, n, seed, workers)
    return McEstimate.from_count(hits, n, seed)


def bernoulli_composition(rels: Sequence[float], configuration: str, n: int, seed: int) -> McEstimate:
    """Sample each device's success as Bernoulli(R_i) and combine."""
    rels = np.asarray(rels, dtype=float)
    if configuration not in ("series", "parallel"):
        raise ConfigError(f"unknown configuration {configuration!r}", path="configuration")

    def trial(rng, m):
        ok = rng.random((m, rels.size)) < rels
        return ok.all(axis=1) if configuration == "series" else ok.any(axis=1)

    return McEstimate.from_count(_count(trial, n, seed, 1), n, seed)
