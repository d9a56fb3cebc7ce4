"""Trace-driven emulation of a worker processing a video stream.

Two knobs drive a worker: allocated threads set its capacity through a
``CapacityProfile``, and the frame scale sets the per-frame demand through a
quadratic ``CostModel``.  Every ``change_interval`` frames both knobs are
resampled (on the same frame boundary).  Inference time is ideal
``demand / capacity``; a frame meets the QoS threshold when
``capacity >= theta * demand``.

Sampling laws act on the GFLOPS axis by default, so a ``uniform`` law
realises exactly the bounds-only model; ``uniform-knob`` instead draws
threads and scale uniformly, as a literal emulator would.  Threads are
therefore real-valued (a fractional CPU quota).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from xecrel.errors import ConfigError
from xecrel.probkernel import Bounds, TruncNormModel, UniformModel, spawn_rngs
from xecrel.reliability import DeviceModel, check_theta
from xecrel.system import Allocation

# 5-20 ms one-way transfer of a compressed region over local wireless.
TAU_COMM_PRESETS = {"none": 0.0, "lan-fast": 0.005, "lan-typical": 0.010, "lan-slow": 0.020}

CSV_COLUMNS = ("frame", "threads", "scale", "capacity_gflops", "demand_gflops", "inference_s", "met_qos")


def fmt(x: float) -> str:
    """Nine significant digits, the artifact float format."""
    return f"{x:.9g}"


@dataclass(frozen=True)
class CostModel:
    gamma_ref: float
    s_ref: float = 1.0

    def __post_init__(self):
        if not (self.gamma_ref > 0 and self.s_ref > 0):
            raise ConfigError("cost model needs gamma_ref > 0 and s_ref > 0", path="cost_model")

    def demand(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s <= 0):
            raise ConfigError(f"scale must be > 0, got {s.min():g}", path="scale")
        out = self.gamma_ref * np.square(s / self.s_ref)
        return float(out) if out.ndim == 0 else out

    def scale_for(self, demand):
        out = self.s_ref * np.sqrt(np.asarray(demand, dtype=float) / self.gamma_ref)
        return float(out) if out.ndim == 0 else out


def demand_of_scale(cm: CostModel, s: float) -> float:
    return cm.demand(s)


def power_law_table(c_at_2: float = 55.0, c_at_6: float = 152.0, threads=range(2, 13)) -> dict:
    """Synthetic thread->GFLOPS table ``c1 * n**p`` through two anchor points.

    Sub-linear exponent gives near-linear growth with mild diminishing returns.
    """
    p = math.log(c_at_6 / c_at_2) / math.log(3.0)
    c1 = c_at_2 / 2.0**p
    return {int(n): c1 * n**p for n in threads}


@dataclass(frozen=True)
class CapacityProfile:
    table: Mapping[int, float]

    def __post_init__(self):
        items = sorted((int(k), float(v)) for k, v in dict(self.table).items())
        if len(items) < 2:
            raise ConfigError("capacity profile needs at least two thread counts", path="profile.table")
        caps = [v for _, v in items]
        if any(b < a for a, b in zip(caps, caps[1:])) or caps[0] <= 0:
            raise ConfigError("capacity profile must be positive and nondecreasing", path="profile.table")
        object.__setattr__(self, "table", dict(items))

    @classmethod
    def default(cls) -> "CapacityProfile":
        return cls(power_law_table())

    @property
    def threads(self) -> np.ndarray:
        return np.array(list(self.table.keys()), dtype=float)

    @property
    def gflops(self) -> np.ndarray:
        return np.array(list(self.table.values()), dtype=float)

    @property
    def domain(self) -> tuple[float, float]:
        t = self.threads
        return float(t[0]), float(t[-1])

    def check(self, lo: float, hi: float, path: str = "thread_range") -> None:
        d0, d1 = self.domain
        if lo < d0 or hi > d1 or lo > hi:
            raise ConfigError(f"thread range [{lo:g}, {hi:g}] outside profile domain [{d0:g}, {d1:g}]", path=path)

    def capacity(self, threads):
        t = np.asarray(threads, dtype=float)
        d0, d1 = self.domain
        if np.any(t < d0) or np.any(t > d1):
            raise ConfigError("thread count outside profile domain (no extrapolation)", path="threads")
        out = np.interp(t, self.threads, self.gflops)
        return float(out) if out.ndim == 0 else out

    def threads_for(self, capacity):
        """Inverse of the piecewise-linear profile (needs strictly increasing capacities)."""
        out = np.interp(np.asarray(capacity, dtype=float), self.gflops, self.threads)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Law:
    """Sampling law for one variable.

    ``uniform``: uniform on the GFLOPS bounds.  ``uniform-knob``: uniform on
    threads or scale.  ``truncnorm``: truncated normal on the GFLOPS bounds,
    parameterised either absolutely (``mu``, ``sigma``) or relative to the
    bounds (``loc``, ``scale`` as fractions of the width).
    """

    kind: str = "uniform"
    mu: Optional[float] = None
    sigma: Optional[float] = None
    loc: Optional[float] = None
    scale: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("uniform", "uniform-knob", "truncnorm"):
            raise ConfigError(f"unknown sampling law {self.kind!r}", path="law.kind")
        if self.kind == "truncnorm":
            absolute = self.mu is not None and self.sigma is not None
            relative = self.loc is not None and self.scale is not None
            if absolute == relative:
                raise ConfigError("truncnorm law needs exactly one of (mu, sigma) or (loc, scale)", path="law")

    @classmethod
    def of(cls, value) -> "Law":
        if isinstance(value, Law):
            return value
        if isinstance(value, str):
            return cls(value)
        return cls(**dict(value))

    def model(self, bounds: Bounds):
        if self.kind == "truncnorm":
            if self.mu is not None:
                return TruncNormModel(self.mu, self.sigma, bounds)
            return TruncNormModel(bounds.lo + self.loc * bounds.width, self.scale * bounds.width, bounds)
        return UniformModel(bounds)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class TraceConfig:
    thread_range: tuple
    scale_range: tuple
    change_interval: int = 20
    n_frames: int = 2590
    seed: int = 0
    capacity_law: Law = field(default_factory=Law)
    demand_law: Law = field(default_factory=Law)

    def __post_init__(self):
        t0, t1 = (float(x) for x in self.thread_range)
        s0, s1 = (float(x) for x in self.scale_range)
        if t0 > t1:
            raise ConfigError("thread_range must be increasing", path="trace.thread_range")
        if not (0 < s0 <= s1):
            raise ConfigError("scale_range must be positive and increasing", path="trace.scale_range")
        if int(self.change_interval) < 1:
            raise ConfigError("change_interval must be >= 1", path="trace.change_interval")
        if int(self.n_frames) < 1:
            raise ConfigError("n_frames must be >= 1", path="trace.n_frames")
        object.__setattr__(self, "thread_range", (t0, t1))
        object.__setattr__(self, "scale_range", (s0, s1))
        object.__setattr__(self, "capacity_law", Law.of(self.capacity_law))
        object.__setattr__(self, "demand_law", Law.of(self.demand_law))

    @property
    def n_blocks(self) -> int:
        return -(-self.n_frames // self.change_interval)

    def capacity_bounds(self, profile: CapacityProfile) -> Bounds:
        return Bounds(*(profile.capacity(t) for t in self.thread_range))

    def demand_bounds(self, cm: CostModel) -> Bounds:
        return Bounds(*(cm.demand(s) for s in self.scale_range))

    def device(self, cm: CostModel, profile: CapacityProfile, label: str = "worker") -> DeviceModel:
        """The stochastic model this trace realises (knob laws approximated as uniform)."""
        cb, db = self.capacity_bounds(profile), self.demand_bounds(cm)
        return DeviceModel(self.capacity_law.model(cb), self.demand_law.model(db), label)


@dataclass
class SimResult:
    frame: np.ndarray
    threads: np.ndarray
    scale: np.ndarray
    capacity: np.ndarray
    demand: np.ndarray
    inference_s: np.ndarray
    met_qos: np.ndarray
    theta: float
    change_interval: int = 1
    tau_comm: float = 0.0

    @property
    def n_frames(self) -> int:
        return int(self.frame.size)

    @property
    def n_blocks(self) -> int:
        """Independent resampling blocks; the effective binomial sample size."""
        return -(-self.n_frames // self.change_interval)

    @property
    def empirical_reliability(self) -> float:
        return float(np.count_nonzero(self.met_qos)) / self.n_frames

    @property
    def mean_fps(self) -> float:
        return float(np.mean(1.0 / self.inference_s))

    @property
    def ratio(self) -> np.ndarray:
        return self.capacity / self.demand

    def subset(self, mask) -> "SimResult":
        mask = np.asarray(mask, dtype=bool)
        return SimResult(
            self.frame[mask], self.threads[mask], self.scale[mask], self.capacity[mask],
            self.demand[mask], self.inference_s[mask], self.met_qos[mask], self.theta,
            self.change_interval, self.tau_comm,
        )

    def block_starts(self) -> "SimResult":
        """First frame of every resampling block."""
        return self.subset(self.frame % self.change_interval == 0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for row in zip(self.frame, self.threads, self.scale, self.capacity, self.demand, self.inference_s, self.met_qos):
            f, t, s, c, d, tau, ok = row
            buf.write(f"{int(f)},{fmt(t)},{fmt(s)},{fmt(c)},{fmt(d)},{fmt(tau)},{int(ok)}\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "n_frames": self.n_frames,
            "n_blocks": self.n_blocks,
            "theta": self.theta,
            "empirical_reliability": float(fmt(self.empirical_reliability)),
            "mean_fps": float(fmt(self.mean_fps)),
        }


def _draw(law: Law, bounds: Bounds, knob_range, to_gflops, rng, m):
    """Return (knob, gflops) arrays for ``m`` blocks."""
    if knob_range[0] == knob_range[1]:
        knob = np.full(m, knob_range[0])
        return knob, np.asarray(to_gflops(knob), dtype=float)
    if law.kind == "uniform-knob":
        knob = knob_range[0] + (knob_range[1] - knob_range[0]) * rng.random(m)
        return knob, np.asarray(to_gflops(knob), dtype=float)
    vals = law.model(bounds).sample(rng, m)
    return None, vals


def _capacity_stream(law, thread_range, profile, rng, m):
    if thread_range[0] == thread_range[1]:
        bounds = None
    else:
        bounds = Bounds(profile.capacity(thread_range[0]), profile.capacity(thread_range[1]))
    knob, cap = _draw(law, bounds, thread_range, profile.capacity, rng, m)
    if knob is None:
        knob = profile.threads_for(cap)
    return np.asarray(knob, dtype=float), cap


def run_stream_sim(cfg: TraceConfig, cm: CostModel, profile: CapacityProfile, theta) -> SimResult:
    """Frame loop for one worker; deterministic for a fixed ``cfg.seed``."""
    theta = check_theta(theta)
    profile.check(*cfg.thread_range, path="trace.thread_range")
    m = cfg.n_blocks
    cap_rng, dem_rng = spawn_rngs(cfg.seed, 2)
    threads_b, cap_b = _capacity_stream(cfg.capacity_law, cfg.thread_range, profile, cap_rng, m)
    dem_bounds = None if cfg.scale_range[0] == cfg.scale_range[1] else cfg.demand_bounds(cm)
    scale_b, dem_b = _draw(cfg.demand_law, dem_bounds, cfg.scale_range, cm.demand, dem_rng, m)
    if scale_b is None:
        scale_b = cm.scale_for(dem_b)

    frame = np.arange(cfg.n_frames)
    blk = frame // cfg.change_interval
    cap, dem = cap_b[blk], dem_b[blk]
    return SimResult(
        frame=frame,
        threads=threads_b[blk],
        scale=np.asarray(scale_b, dtype=float)[blk],
        capacity=cap,
        demand=dem,
        inference_s=dem / cap,
        met_qos=cap >= theta * dem,
        theta=theta,
        change_interval=cfg.change_interval,
    )


def empirical_reliability_curve(result: SimResult, thetas: Sequence[float]) -> list[tuple[float, float]]:
    """Fraction of frames with ``capacity >= theta * demand`` for each threshold."""
    if result.n_frames == 0:
        raise ConfigError("simulation result has no frames", path="records")
    out = []
    for t in thetas:
        t = check_theta(t)
        out.append((t, float(np.count_nonzero(result.capacity >= t * result.demand)) / result.n_frames))
    return out


def split_by_demand(result: SimResult, edges: Sequence[float]) -> list[SimResult]:
    """Partition frames into demand regimes separated by ``edges`` (GFLOPS)."""
    cuts = [-math.inf, *edges, math.inf]
    return [result.subset((result.demand >= a) & (result.demand < b)) for a, b in zip(cuts, cuts[1:])]


# -- spatially partitioned series deployment ---------------------------------


@dataclass(frozen=True)
class DeploymentConfig:
    worker_thread_ranges: tuple
    tau_comm: float = 0.0
    partition: object = "equal"
    baseline_threads: Optional[tuple] = None

    def __post_init__(self):
        ranges = tuple(tuple(float(x) for x in r) for r in self.worker_thread_ranges)
        if not ranges:
            raise ConfigError("deployment needs at least one worker", path="deployment.worker_thread_ranges")
        object.__setattr__(self, "worker_thread_ranges", ranges)
        if self.tau_comm < 0:
            raise ConfigError("tau_comm must be >= 0", path="deployment.tau_comm")
        if self.partition == "equal":
            alloc = Allocation.equal(len(ranges))
        elif isinstance(self.partition, Allocation):
            alloc = self.partition
        else:
            alloc = Allocation(tuple(self.partition))
        if len(alloc) != len(ranges):
            raise ConfigError("partition length differs from worker count", path="deployment.partition")
        object.__setattr__(self, "partition", alloc)
        base = self.baseline_threads if self.baseline_threads is not None else ranges[0]
        object.__setattr__(self, "baseline_threads", tuple(float(x) for x in base))

    @property
    def n_workers(self) -> int:
        return len(self.worker_thread_ranges)


@dataclass
class DeploymentReport:
    worker_latency: np.ndarray  # frames x workers
    system_latency: np.ndarray
    baseline_latency: np.ndarray
    fractions: tuple
    tau_comm: float

    @property
    def worker_fps(self) -> np.ndarray:
        return np.mean(1.0 / self.worker_latency, axis=0)

    @property
    def worker_mean_latency(self) -> np.ndarray:
        return np.mean(self.worker_latency, axis=0)

    @property
    def system_fps(self) -> float:
        return float(np.mean(1.0 / self.system_latency))

    @property
    def baseline_fps(self) -> float:
        return float(np.mean(1.0 / self.baseline_latency))

    @property
    def speedup(self) -> float:
        return self.system_fps / self.baseline_fps

    def series_curve(self, thetas) -> list[tuple]:
        """(theta, per-worker empirical reliabilities, system empirical reliability)."""
        out = []
        for t in thetas:
            ok = (1.0 / self.worker_latency) >= t
            out.append((t, ok.mean(axis=0).tolist(), float(ok.all(axis=1).mean())))
        return out

    def to_dict(self) -> dict:
        return {
            "workers": [
                {"fraction": f, "fps": float(fmt(v)), "latency_s": float(fmt(l))}
                for f, v, l in zip(self.fractions, self.worker_fps, self.worker_mean_latency)
            ],
            "system": {"fps": float(fmt(self.system_fps)), "latency_s": float(fmt(float(np.mean(self.system_latency))))},
            "baseline": {
                "fps": float(fmt(self.baseline_fps)),
                "latency_s": float(fmt(float(np.mean(self.baseline_latency)))),
            },
            "speedup": float(fmt(self.speedup)),
            "tau_comm": self.tau_comm,
        }


def run_series_deployment(
    dep: DeploymentConfig, cfg: TraceConfig, cm: CostModel, profile: CapacityProfile
) -> DeploymentReport:
    """Each frame is split spatially; worker i handles ``alpha_i`` of its pixels.

    Worker latency is ``tau_comm + alpha_i * demand / C_i``; the frame is done
    when the slowest worker finishes.  The baseline is one device with
    ``baseline_threads`` processing the whole frame locally.
    """
    for k, r in enumerate(dep.worker_thread_ranges):
        profile.check(*r, path=f"deployment.worker_thread_ranges[{k}]")
    profile.check(*dep.baseline_threads, path="deployment.baseline_threads")
    m = cfg.n_blocks
    rngs = spawn_rngs(cfg.seed, dep.n_workers + 2)
    dem_bounds = None if cfg.scale_range[0] == cfg.scale_range[1] else cfg.demand_bounds(cm)
    _, dem_b = _draw(cfg.demand_law, dem_bounds, cfg.scale_range, cm.demand, rngs[0], m)
    _, base_b = _capacity_stream(cfg.capacity_law, dep.baseline_threads, profile, rngs[1], m)
    caps = [
        _capacity_stream(cfg.capacity_law, r, profile, rngs[2 + k], m)[1]
        for k, r in enumerate(dep.worker_thread_ranges)
    ]
    blk = np.arange(cfg.n_frames) // cfg.change_interval
    dem = np.asarray(dem_b)[blk]
    alpha = np.asarray(dep.partition.fractions)
    cap = np.stack([c[blk] for c in caps], axis=1)
    worker = dep.tau_comm + (alpha[None, :] * dem[:, None]) / cap
    return DeploymentReport(
        worker_latency=worker,
        system_latency=worker.max(axis=1),
        baseline_latency=dem / base_b[blk],
        fractions=tuple(dep.partition.fractions),
        tau_comm=dep.tau_comm,
    )
