"""Single-device computational reliability ``R(theta) = P(C / D >= theta)``.

Capacity ``C`` and demand ``D`` are independent.  Two regimes:

* minimal information: both uniform over their declared bounds.  Solved
  exactly by splitting the demand axis at ``C.lo/theta`` and ``C.hi/theta``;
  below the first breakpoint the capacity always suffices, above the second
  it never does, and in between the conditional success probability is linear
  in the demand.
* historical: truncated normals (or any mix with uniforms).  The same split is
  used; the middle strip is integrated by adaptive Gauss-Kronrod quadrature.

The textbook closed forms that assume ``theta * D.lo >= C.lo`` are kept as
``reliability_mi_lemma1`` and ``reliability_hist_lemma2`` for cross-checking.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from xecrel.errors import ConfigError, QuadratureError
from xecrel.probkernel import Bounds, Model, TruncNormModel, UniformModel, std_normal_cdf, std_normal_pdf

QUAD_ABS_TOL = 1e-8
QUAD_LIMIT = 2000


@dataclass(frozen=True)
class DeviceModel:
    """A worker's capacity model paired with the demand model it serves."""

    capacity: Model
    demand: Model
    label: str = "device"

    def __post_init__(self):
        for name in ("capacity", "demand"):
            m = getattr(self, name)
            if not isinstance(m, (UniformModel, TruncNormModel)):
                raise ConfigError(f"{name} must be a UniformModel or TruncNormModel", path=name)
            if m.bounds.lo <= 0:
                raise ConfigError(f"{name} bounds must be positive rates, got lo={m.bounds.lo:g}", path=name)

    @classmethod
    def uniform(cls, cap, dem, label="device") -> "DeviceModel":
        return cls(UniformModel(Bounds.of(cap)), UniformModel(Bounds.of(dem)), label)

    @property
    def is_mi(self) -> bool:
        return isinstance(self.capacity, UniformModel) and isinstance(self.demand, UniformModel)

    @property
    def saturation_theta(self) -> float:
        """Largest threshold with reliability exactly 1."""
        return self.capacity.bounds.lo / self.demand.bounds.hi

    @property
    def zero_theta(self) -> float:
        """Smallest threshold with reliability exactly 0."""
        return self.capacity.bounds.hi / self.demand.bounds.lo

    def scaled(self, k: float) -> "DeviceModel":
        return DeviceModel(self.capacity.scaled(k), self.demand.scaled(k), self.label)


def check_theta(theta) -> float:
    theta = float(theta)
    if not (math.isfinite(theta) and theta > 0):
        raise ConfigError(f"QoS threshold must be finite and > 0, got {theta}", path="theta")
    return theta


def _strips(cap: Bounds, dem: Bounds, theta: float):
    """Demand-axis split: [dem.lo, a) always succeeds, [l, u] partial, (u, dem.hi] never."""
    a = cap.lo / theta
    b = cap.hi / theta
    lo = max(dem.lo, a)
    hi = min(dem.hi, b)
    sure_hi = min(dem.hi, a)
    return sure_hi, lo, hi


def reliability_mi(capacity_bounds, demand_bounds, theta) -> float:
    """Exact ``P(C/D >= theta)`` for independent uniform C and D."""
    cap, dem = Bounds.of(capacity_bounds), Bounds.of(demand_bounds)
    theta = check_theta(theta)
    sure_hi, lo, hi = _strips(cap, dem, theta)
    area = 0.0
    if sure_hi > dem.lo:
        area += cap.width * (sure_hi - dem.lo)
    if hi > lo:
        # integral of (C.hi - theta * d) over the partial strip
        area += cap.hi * (hi - lo) - 0.5 * theta * (hi - lo) * (hi + lo)
    r = area / (cap.width * dem.width)
    return min(1.0, max(0.0, r))


def d_reliability_mi(capacity_bounds, demand_bounds, theta) -> float:
    """``dR/dtheta`` for the uniform regime (continuous, piecewise rational)."""
    cap, dem = Bounds.of(capacity_bounds), Bounds.of(demand_bounds)
    theta = check_theta(theta)
    _, lo, hi = _strips(cap, dem, theta)
    if hi <= lo:
        return 0.0
    return -0.5 * (hi - lo) * (hi + lo) / (cap.width * dem.width)


def reliability_mi_lemma1(capacity_bounds, demand_bounds, theta) -> float:
    """The single-expression uniform formula, valid only when ``theta * D.lo >= C.lo``.

    Without that condition it drops the region where capacity always
    suffices, so it is used here only as an independent check.
    """
    cap, dem = Bounds.of(capacity_bounds), Bounds.of(demand_bounds)
    theta = check_theta(theta)
    if theta * dem.lo < cap.lo:
        raise ValueError(f"closed form needs theta*D.lo >= C.lo ({theta * dem.lo:g} < {cap.lo:g})")
    if dem.lo * theta >= cap.hi:
        return 0.0
    du = min(dem.hi, cap.hi / theta)
    upper = cap.hi * du - 0.5 * theta * du * du
    lower = cap.hi * dem.lo - 0.5 * theta * dem.lo * dem.lo
    return (upper - lower) / (cap.width * dem.width)


def _breakpoints(device: DeviceModel, theta: float, lo: float, hi: float) -> list[float]:
    pts = []
    for m, scale in ((device.demand, 1.0), (device.capacity, 1.0 / theta)):
        if isinstance(m, TruncNormModel):
            for k in (-6, -3, -1, 0, 1, 3, 6):
                pts.append((m.mu + k * m.sigma) * scale)
    return sorted({p for p in pts if lo < p < hi})


def _quad(func, lo, hi, points, tol, limit, what):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, *_ = integrate.quad(
            func, lo, hi, epsabs=tol, epsrel=0.0, limit=limit, points=points or None, full_output=1
        )
    if not (math.isfinite(val) and err <= tol):
        raise QuadratureError(f"quadrature for {what} stalled at error {err:.3g} > {tol:g}")
    return val


def reliability_hist(device: DeviceModel, theta, tol: float = QUAD_ABS_TOL, limit: int = QUAD_LIMIT) -> float:
    """``P(C/D >= theta)`` for any pair of models, by quadrature over demand.

    Integrates ``f_D(d) * P(C >= max(C.lo, theta*d))`` without assuming
    ``theta * D.lo >= C.lo``.
    """
    theta = check_theta(theta)
    cap, dem = device.capacity, device.demand
    sure_hi, lo, hi = _strips(cap.bounds, dem.bounds, theta)
    r = 0.0
    if sure_hi > dem.bounds.lo:
        r += float(dem.cdf(sure_hi))
    if hi > lo:

        def integrand(d):
            return dem.pdf(d) * cap.sf(theta * d)

        what = f"device {device.label!r} at theta={theta:g}"
        r += _quad(integrand, lo, hi, _breakpoints(device, theta, lo, hi), tol, limit, what)
    return min(1.0, max(0.0, r))


def reliability_hist_lemma2(device: DeviceModel, theta) -> float:
    """Closed split form for truncated normals, valid when every ``theta*d`` lies in ``[C.lo, C.hi]``.

    The printed expression subtracts ``Phi((theta*d - mu_C)/sigma_C)`` from
    ``Phi(beta_C)`` unconditionally, so it also needs ``theta * D.hi <= C.hi``.
    """
    theta = check_theta(theta)
    cap, dem = device.capacity, device.demand
    if not (isinstance(cap, TruncNormModel) and isinstance(dem, TruncNormModel)):
        raise ValueError("closed form needs truncated-normal capacity and demand")
    if theta * dem.bounds.lo < cap.bounds.lo or theta * dem.bounds.hi > cap.bounds.hi:
        raise ValueError("closed form needs C.lo <= theta*d <= C.hi over the demand range")

    def integrand(d):
        return std_normal_pdf((d - dem.mu) / dem.sigma) * std_normal_cdf((theta * d - cap.mu) / cap.sigma)

    pts = sorted({p for p in (dem.mu, cap.mu / theta) if dem.bounds.lo < p < dem.bounds.hi})
    inner = _quad(integrand, dem.bounds.lo, dem.bounds.hi, pts, 1e-12, QUAD_LIMIT, "closed split form")
    return (std_normal_cdf(cap.beta) * dem.z - inner / dem.sigma) / (cap.z * dem.z)


def reliability(device: DeviceModel, theta) -> float:
    """Dispatch: exact piecewise form for uniform pairs, quadrature otherwise."""
    if device.is_mi:
        return reliability_mi(device.capacity.bounds, device.demand.bounds, theta)
    return reliability_hist(device, theta)


def d_reliability(device: DeviceModel, theta, tol: float = 1e-12) -> float:
    """``dR/dtheta`` at ``theta``.

    Uniform pairs use the analytic expression.  Otherwise the boundary terms
    cancel and the derivative is ``-int d f_D(d) f_C(theta*d) dd`` over the
    partial strip, evaluated by quadrature.
    """
    theta = check_theta(theta)
    if device.is_mi:
        return d_reliability_mi(device.capacity.bounds, device.demand.bounds, theta)
    cap, dem = device.capacity, device.demand
    _, lo, hi = _strips(cap.bounds, dem.bounds, theta)
    if hi <= lo:
        return 0.0

    def integrand(d):
        return -d * dem.pdf(d) * cap.pdf(theta * d)

    return _quad(integrand, lo, hi, _breakpoints(device, theta, lo, hi), tol, QUAD_LIMIT, "reliability slope")


def reliability_curve(device: DeviceModel, thetas: Sequence[float]) -> list[tuple[float, float]]:
    """``[(theta, R(theta)), ...]`` over a strictly increasing grid.

    Quadrature noise (at most the absolute tolerance) is clipped with a
    running minimum so the returned curve is nonincreasing.
    """
    grid = [check_theta(t) for t in thetas]
    if not grid:
        raise ConfigError("theta grid is empty", path="thetas")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("theta grid must be strictly increasing", path="thetas")
    values = []
    for t in grid:
        try:
            values.append(reliability(device, t))
        except QuadratureError as exc:
            raise QuadratureError(f"theta={t:g}: {exc}") from exc
    values = np.minimum.accumulate(np.asarray(values)).tolist()
    return list(zip(grid, values))


def parse_grid(spec: str) -> list[float]:
    """``"start:stop:step"`` (endpoint inclusive within 1e-9) or comma list."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid must be start:stop:step, got {spec!r}", path="thetas")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ConfigError(f"bad grid {spec!r}", path="thetas")
        n = int(math.floor((stop - start) / step + 1e-9))
        return [round(start + i * step, 12) for i in range(n + 1)]
    return [float(p) for p in spec.split(",") if p.strip()]
