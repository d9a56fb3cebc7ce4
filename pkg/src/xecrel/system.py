"""Multi-device reliability: series, parallel and partitioned pools.

Device successes are independent, so series reliability is a product,
parallel reliability is one minus the product of failures, and a
partitioned pool multiplies per-device reliabilities at reduced thresholds
``alpha_i * theta``.

The partition solver works in threshold space (``t_i = alpha_i * theta``)
and maximises ``sum log R_i(t_i)`` subject to ``sum t_i = theta``.  At an
interior optimum all slopes ``R_i'(t_i) / R_i(t_i)`` equal a common
multiplier.  ``log R_i`` is not concave everywhere (the uniform pair has a
convex kink at ``C.lo / D.lo``), so the multiplier bisection is backed by a
multi-start local search and the winner is polished with Newton steps on
the stationarity system.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize

from xecrel.errors import ConfigError, ConvergenceError, InfeasibleError
from xecrel.reliability import DeviceModel, check_theta, d_reliability, reliability

SUM_TOL = 1e-12
# Relative slack when comparing a product against a target.
CMP_SLACK = 1e-12


@dataclass(frozen=True)
class DevicePool:
    devices: tuple

    def __post_init__(self):
        devices = tuple(self.devices)
        if not devices:
            raise ConfigError("device pool is empty", path="devices")
        labels = [d.label for d in devices]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"device labels must be unique, got {labels}", path="devices")
        object.__setattr__(self, "devices", devices)

    def __len__(self):
        return len(self.devices)

    def __iter__(self):
        return iter(self.devices)

    @property
    def labels(self) -> list[str]:
        return [d.label for d in self.devices]

    def reliabilities(self, theta) -> dict[str, float]:
        return {d.label: reliability(d, theta) for d in self.devices}


@dataclass(frozen=True)
class Allocation:
    fractions: tuple

    def __post_init__(self):
        fr = tuple(float(a) for a in self.fractions)
        if not fr:
            raise ConfigError("allocation is empty", path="fractions")
        if any(not (a > 0) for a in fr):
            raise ConfigError(f"allocation fractions must be > 0, got {fr}", path="fractions")
        if abs(math.fsum(fr) - 1.0) > SUM_TOL:
            raise ConfigError(f"allocation must sum to 1, got {math.fsum(fr)!r}", path="fractions")
        object.__setattr__(self, "fractions", fr)

    @classmethod
    def equal(cls, n: int) -> "Allocation":
        return cls((1.0 / n,) * n)

    @classmethod
    def normalized(cls, weights) -> "Allocation":
        w = np.asarray(weights, dtype=float)
        return cls(tuple(w / math.fsum(w)))

    def __len__(self):
        return len(self.fractions)


@dataclass(frozen=True)
class SelectionResult:
    n_star: int
    chosen_labels: tuple
    achieved_reliability: float
    feasible: bool
    mode: str = "series"

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_star": self.n_star,
            "chosen_labels": list(self.chosen_labels),
            "achieved_reliability": self.achieved_reliability,
            "feasible": self.feasible,
        }


@dataclass
class PartitionResult:
    allocation: Allocation
    reliability: float
    kkt_residual: float
    method: str
    per_device: list = field(default_factory=list)

    def to_dict(self, labels=None) -> dict:
        d = {
            "fractions": list(self.allocation.fractions),
            "reliability": self.reliability,
            "kkt_residual": self.kkt_residual,
            "method": self.method,
            "per_device_reliability": list(self.per_device),
        }
        if labels is not None:
            d["labels"] = list(labels)
        return d


def _thetas_for(pool: DevicePool, thetas) -> list[float]:
    if np.ndim(thetas) == 0:
        return [check_theta(thetas)] * len(pool)
    thetas = [check_theta(t) for t in thetas]
    if len(thetas) != len(pool):
        raise ConfigError(f"need one theta per device ({len(pool)}), got {len(thetas)}", path="thetas")
    return thetas


def series_reliability(pool: DevicePool, thetas) -> float:
    return math.prod(reliability(d, t) for d, t in zip(pool, _thetas_for(pool, thetas)))


def parallel_reliability(pool: DevicePool, theta) -> float:
    theta = check_theta(theta)
    return 1.0 - math.prod(1.0 - reliability(d, theta) for d in pool)


def partitioned_reliability(pool: DevicePool, alloc: Allocation, theta) -> float:
    theta = check_theta(theta)
    if len(alloc) != len(pool):
        raise ConfigError(f"allocation has {len(alloc)} entries for {len(pool)} devices", path="fractions")
    return math.prod(reliability(d, a * theta) for d, a in zip(pool, alloc.fractions))


# -- partition solver ---------------------------------------------------------


def _log_r(dev: DeviceModel, t: float) -> float:
    r = reliability(dev, t)
    return math.log(r) if r > 0 else -math.inf


def _slope(dev: DeviceModel, t: float) -> float:
    """``d log R / dt``; zero on the saturated strip, -inf past the zero point."""
    if t <= dev.saturation_theta:
        return 0.0
    r = reliability(dev, t)
    if r <= 0:
        return -math.inf
    return d_reliability(dev, t) / r


def _curvature(dev: DeviceModel, t: float) -> float:
    h = 1e-6 * t
    return (_slope(dev, t + h) - _slope(dev, t - h)) / (2 * h)


def _objective(pool: DevicePool, ts) -> float:
    return math.fsum(_log_r(d, t) for d, t in zip(pool, ts))


def _inverse_slope(dev: DeviceModel, mu: float) -> float:
    """A ``t`` in the live range with slope ``mu`` (mu < 0); unique when log R is concave."""
    lo, hi = dev.saturation_theta, dev.zero_theta

    def f(t):
        g = _slope(dev, t)
        return (g if math.isfinite(g) else -1e300) - mu

    if f(hi * (1 - 1e-12)) >= 0:
        return hi
    return optimize.brentq(f, lo, hi * (1 - 1e-12), xtol=1e-14 * hi, rtol=4 * np.finfo(float).eps, maxiter=500)


def _multiplier_bisection(pool: DevicePool, theta: float) -> np.ndarray:
    """Root of ``sum_i t_i(mu) = theta`` in the shared multiplier, searched in ``log(-mu)``."""

    def excess(u):
        return sum(_inverse_slope(d, -math.exp(u)) for d in pool) - theta

    # shares grow as the multiplier becomes more negative
    lo_u, hi_u = 0.0, 0.0
    while excess(lo_u) > 0 and lo_u > -700:
        lo_u -= 8.0
    while excess(hi_u) < 0 and hi_u < 700:
        hi_u += 8.0
    if excess(lo_u) <= 0 <= excess(hi_u) and lo_u < hi_u:
        u = optimize.brentq(excess, lo_u, hi_u, xtol=1e-13, maxiter=500)
    else:
        u = lo_u if abs(excess(lo_u)) < abs(excess(hi_u)) else hi_u
    return np.array([_inverse_slope(d, -math.exp(u)) for d in pool])


def _local_search(pool: DevicePool, theta: float, start) -> np.ndarray | None:
    lo = np.array([d.saturation_theta for d in pool])
    hi = np.array([d.zero_theta for d in pool])
    eps = 1e-9 * theta

    def fun(ts):
        v = _objective(pool, ts)
        return -v if math.isfinite(v) else 1e6

    def jac(ts):
        g = np.array([_slope(d, t) for d, t in zip(pool, ts)])
        return -np.where(np.isfinite(g), g, -1e6)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # SLSQP clipping to the box
        res = optimize.minimize(
            fun,
            np.clip(start, lo, hi - eps),
            jac=jac,
            method="SLSQP",
            bounds=list(zip(lo, hi - eps)),
            constraints=[{"type": "eq", "fun": lambda ts: np.sum(ts) - theta, "jac": lambda ts: np.ones_like(ts)}],
            options={"ftol": 1e-14, "maxiter": 500},
        )
    ts = np.asarray(res.x, dtype=float)
    if not np.all(np.isfinite(ts)):
        return None
    return ts * (theta / ts.sum())


def _newton_polish(pool: DevicePool, theta: float, ts: np.ndarray, iters: int = 50) -> np.ndarray:
    ts = ts.copy()
    lo = np.array([d.saturation_theta for d in pool])
    hi = np.array([d.zero_theta for d in pool])
    for _ in range(iters):
        g = np.array([_slope(d, t) for d, t in zip(pool, ts)])
        if not np.all(np.isfinite(g)) or np.ptp(g) < 1e-13:
            break
        h = np.array([_curvature(d, t) for d, t in zip(pool, ts)])
        if np.any(h >= 0) or not np.all(np.isfinite(h)):
            break
        # g_i + h_i dt_i = mu, sum dt_i = 0
        mu = np.sum(g / h) / np.sum(1.0 / h)
        step = (mu - g) / h
        scale = 1.0
        while scale > 1e-6:
            cand = ts + scale * step
            if np.all(cand > lo) and np.all(cand < hi):
                break
            scale *= 0.5
        new = ts + scale * step
        new *= theta / new.sum()
        if _objective(pool, new) < _objective(pool, ts) - 1e-13:
            break
        ts = new
    return ts


def kkt_residual(pool: DevicePool, alloc: Allocation, theta) -> float:
    """Spread of ``R_i'/R_i`` at ``alpha_i * theta`` over non-saturated devices."""
    theta = check_theta(theta)
    slopes = [
        _slope(d, a * theta) for d, a in zip(pool, alloc.fractions) if a * theta > d.saturation_theta
    ]
    if len(slopes) < 2:
        return 0.0
    return float(max(slopes) - min(slopes))


def _has_nonmonotone_slope(dev: DeviceModel, n: int = 64) -> bool:
    ts = np.linspace(dev.saturation_theta, dev.zero_theta, n + 2)[1:-1]
    g = np.array([_slope(dev, t) for t in ts])
    return bool(np.any(np.diff(g) > 1e-12 * np.abs(g).max()))


def optimize_partition(pool: DevicePool, theta, n_starts: int = 4, seed: int = 0) -> PartitionResult:
    """Allocation maximising the partitioned reliability.

    Raises ``InfeasibleError`` when every allocation leaves some device at
    reliability zero, and ``ConvergenceError`` if no candidate has a finite
    objective.
    """
    theta = check_theta(theta)
    n = len(pool)
    sat = np.array([d.saturation_theta for d in pool])
    zero = np.array([d.zero_theta for d in pool])
    if zero.sum() <= theta:
        raise InfeasibleError(
            f"thresholds cannot be split: sum of per-device zero points {zero.sum():g} <= theta {theta:g}"
        )

    equal = Allocation.equal(n)
    if partitioned_reliability(pool, equal, theta) == 1.0:
        return _result(pool, equal, theta, "equal-split (flat optimum)")
    if sat.sum() >= theta:
        return _result(pool, Allocation.normalized(sat), theta, "saturation split")

    cands = {"multiplier-bisection": _multiplier_bisection(pool, theta)}
    cands["equal-split"] = np.full(n, theta / n)
    if n > 1 and any(_has_nonmonotone_slope(d) for d in pool):
        rng = np.random.default_rng(seed)
        starts = [cands["multiplier-bisection"], np.full(n, theta / n), zero * theta / zero.sum()]
        starts += [rng.dirichlet(np.ones(n)) * theta for _ in range(n_starts)]
        for k, s in enumerate(starts):
            ts = _local_search(pool, theta, s)
            if ts is not None:
                cands[f"local-search[{k}]"] = ts

    best_name, best_ts, best_val = None, None, -math.inf
    for name, ts in cands.items():
        if np.any(ts <= 0):
            continue
        ts = _newton_polish(pool, theta, ts * (theta / ts.sum()))
        val = _objective(pool, ts)
        if val > best_val + 1e-13:
            best_name, best_ts, best_val = name, ts, val
    if best_ts is None or not math.isfinite(best_val):
        raise ConvergenceError("no allocation with positive reliability found", best=cands)
    return _result(pool, Allocation.normalized(best_ts / theta), theta, best_name)


def _result(pool, alloc, theta, method) -> PartitionResult:
    per = [reliability(d, a * theta) for d, a in zip(pool, alloc.fractions)]
    return PartitionResult(
        allocation=alloc,
        reliability=math.prod(per),
        kkt_residual=kkt_residual(pool, alloc, theta),
        method=method,
        per_device=per,
    )


# -- device selection ---------------------------------------------------------


def _ranked(rels: Mapping[str, float]) -> list[tuple[str, float]]:
    return sorted(rels.items(), key=lambda kv: (-kv[1], kv[0]))


def _check_eps(epsilon) -> float:
    epsilon = float(epsilon)
    if not 0 < epsilon < 1:
        raise ConfigError(f"target reliability must be in (0, 1), got {epsilon}", path="epsilon")
    return epsilon


def select_series(rels: Mapping[str, float], epsilon) -> SelectionResult:
    """Largest N whose top-N product still meets ``epsilon``."""
    epsilon = _check_eps(epsilon)
    ranked = _ranked(rels)
    prod, n_star, achieved = 1.0, 0, 0.0
    for k, (_, r) in enumerate(ranked, start=1):
        prod *= r
        if prod >= epsilon * (1 - CMP_SLACK):
            n_star, achieved = k, prod
        else:
            break
    chosen = tuple(label for label, _ in ranked[:n_star])
    return SelectionResult(n_star, chosen, achieved, n_star > 0, "series")


def select_parallel(rels: Mapping[str, float], epsilon) -> SelectionResult:
    """Smallest N whose top-N cumulative failure is at most ``1 - epsilon``."""
    epsilon = _check_eps(epsilon)
    ranked = _ranked(rels)
    fail = 1.0
    target = (1.0 - epsilon) * (1 + CMP_SLACK)
    for k, (_, r) in enumerate(ranked, start=1):
        fail *= 1.0 - r
        if fail <= target:
            chosen = tuple(label for label, _ in ranked[:k])
            return SelectionResult(k, chosen, 1.0 - fail, True, "parallel")
    return SelectionResult(0, (), 1.0 - fail, False, "parallel")


def max_series_devices(candidates: DevicePool, theta, epsilon) -> SelectionResult:
    return select_series(candidates.reliabilities(theta), epsilon)


def min_parallel_devices(candidates: DevicePool, theta, epsilon) -> SelectionResult:
    return select_parallel(candidates.reliabilities(theta), epsilon)


def _ceil(x: float) -> int:
    # log ratios of round numbers land a few ulp off integers
    return int(math.ceil(x - 1e-9))


def parallel_worst_case_bound(r_min, epsilon) -> int:
    """Device count that suffices when every device has reliability >= ``r_min``."""
    r_min, epsilon = float(r_min), _check_eps(epsilon)
    if not 0 < r_min < 1:
        raise ConfigError(f"r_min must be in (0, 1), got {r_min}", path="r_min")
    return max(1, _ceil(math.log1p(-epsilon) / math.log1p(-r_min)))


def series_closed_form(r, epsilon) -> int:
    """``floor(ln eps / ln r)`` for a pool of identical devices."""
    return int(math.floor(math.log(epsilon) / math.log(r) + 1e-9))


def uniform_reliabilities(r: float, m: int, prefix: str = "dev") -> dict[str, float]:
    width = len(str(m - 1))
    return {f"{prefix}{i:0{width}d}": float(r) for i in range(m)}
