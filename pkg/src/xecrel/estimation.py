"""Maximum-likelihood fitting of truncated-normal capacity/demand models.

The optimiser works in standardised coordinates
``m = (mu - mid) / width`` and ``s = log(sigma / width)`` so that traces in
any unit behave the same.  ``sigma`` is boxed to ``[width * 1e-6, width * 1e4]``
and ``mu`` to ``mid +- 100 * width``; a near-uniform trace pushes ``sigma``
to its cap, where the projected gradient vanishes.  Fits are also kept
where the truncation mass stays above the model floor; short traces can
otherwise push ``mu`` far outside the bounds, toward an exponential limit
with no interior maximiser.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from xecrel.errors import ConfigError, TraceError
from xecrel.probkernel import Z_FLOOR, Bounds, TruncNormModel, _log_mass

SIGMA_MIN_REL = 1e-6
SIGMA_MAX_REL = 1e4
MU_SPAN_REL = 100.0
STD_FLOOR_REL = 1e-3
GRAD_TOL = 1e-6
# fits are kept a factor 2 above the model's truncation-mass floor
LOG_MASS_MIN = math.log(2 * Z_FLOOR)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ObservationTrace:
    samples: tuple
    bounds: Bounds
    timestamps: Optional[tuple] = None

    def __post_init__(self):
        bounds = Bounds.of(self.bounds)
        object.__setattr__(self, "bounds", bounds)
        xs = np.asarray(self.samples, dtype=float).ravel()
        bad = np.flatnonzero(~np.isfinite(xs) | (xs < bounds.lo) | (xs > bounds.hi))
        if bad.size:
            i = int(bad[0])
            raise TraceError(
                f"{bad.size} sample(s) outside declared bounds [{bounds.lo:g}, {bounds.hi:g}]; "
                f"first at index {i}: {xs[i]!r}",
                path=f"samples[{i}]",
            )
        object.__setattr__(self, "samples", tuple(xs.tolist()))
        if self.timestamps is not None:
            ts = tuple(self.timestamps)
            if len(ts) != len(xs):
                raise TraceError("timestamps and samples differ in length", path="timestamps")
            object.__setattr__(self, "timestamps", ts)

    def __len__(self):
        return len(self.samples)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.samples, dtype=float)

    def head(self, n: int) -> "ObservationTrace":
        ts = None if self.timestamps is None else self.timestamps[:n]
        return ObservationTrace(self.samples[:n], self.bounds, ts)

    def decimated(self, interval: int, offset: int = 0) -> "ObservationTrace":
        """Keep one sample per ``interval`` frames (the first of each block)."""
        if interval < 1:
            raise ConfigError("decimation interval must be >= 1", path="interval")
        ts = None if self.timestamps is None else self.timestamps[offset::interval]
        return ObservationTrace(self.samples[offset::interval], self.bounds, ts)


@dataclass(frozen=True)
class FitResult:
    model: TruncNormModel
    loglik: float
    n_samples: int
    converged: bool
    iterations: int
    grad_norm: float = 0.0

    @property
    def mu(self) -> float:
        return self.model.mu

    @property
    def sigma(self) -> float:
        return self.model.sigma

    def to_dict(self) -> dict:
        b = self.model.bounds
        return {
            "mu": self.model.mu,
            "sigma": self.model.sigma,
            "bounds": [b.lo, b.hi],
            "loglik": self.loglik,
            "n_samples": self.n_samples,
            "converged": self.converged,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
        }


def moments_init(trace: ObservationTrace) -> tuple[float, float]:
    """Uniform-prior start: midpoint and ``width/sqrt(12)`` with no data,
    otherwise sample mean and standard deviation (floored at ``width/1000``).

    A single sample moves the location only; its spread stays at the prior.
    """
    b = trace.bounds
    n = len(trace)
    if n == 0:
        return b.mid, b.width / math.sqrt(12.0)
    xs = trace.values
    if n == 1:
        return float(xs[0]), b.width / math.sqrt(12.0)
    return float(xs.mean()), max(float(xs.std(ddof=1)), b.width * STD_FLOOR_REL)


# -- likelihood in standardised coordinates -----------------------------------


class _Likelihood:
    def __init__(self, xs: np.ndarray, bounds: Bounds):
        self.xs = xs
        self.n = xs.size
        self.b = bounds
        self.lo_box = np.array([-MU_SPAN_REL, math.log(SIGMA_MIN_REL)])
        self.hi_box = np.array([MU_SPAN_REL, math.log(SIGMA_MAX_REL)])

    def natural(self, p):
        m, s = p
        return self.b.mid + m * self.b.width, self.b.width * math.exp(s)

    def standard(self, mu, sigma):
        return np.array([(mu - self.b.mid) / self.b.width, math.log(sigma / self.b.width)])

    def value_grad(self, p):
        """Total log-likelihood and its gradient in (m, s)."""
        mu, sigma = self.natural(p)
        z = (self.xs - mu) / sigma
        a = (self.b.lo - mu) / sigma
        bb = (self.b.hi - mu) / sigma
        log_z = _log_mass(a, bb)
        ll = -0.5 * float(np.dot(z, z)) - self.n * (math.log(sigma) + _LOG_SQRT_2PI + log_z)
        pa = math.exp(-0.5 * a * a - _LOG_SQRT_2PI - log_z)
        pb = math.exp(-0.5 * bb * bb - _LOG_SQRT_2PI - log_z)
        d_mu = (float(z.sum()) + self.n * (pb - pa)) / sigma
        d_sigma = (float(np.dot(z, z)) - self.n + self.n * (bb * pb - a * pa)) / sigma
        return ll, np.array([d_mu * self.b.width, d_sigma * sigma])

    def log_mass(self, p):
        """log Z and its gradient in (m, s); used to keep fits above the mass floor."""
        mu, sigma = self.natural(p)
        a = (self.b.lo - mu) / sigma
        bb = (self.b.hi - mu) / sigma
        log_z = _log_mass(a, bb)
        pa = math.exp(-0.5 * a * a - _LOG_SQRT_2PI - log_z)
        pb = math.exp(-0.5 * bb * bb - _LOG_SQRT_2PI - log_z)
        return log_z, np.array([(pa - pb) * self.b.width / sigma, a * pa - bb * pb])

    def projected(self, p, g):
        """Zero gradient components that push into an active box face."""
        g = g.copy()
        at_lo = p <= self.lo_box + 1e-12
        at_hi = p >= self.hi_box - 1e-12
        g[at_lo & (g < 0)] = 0.0
        g[at_hi & (g > 0)] = 0.0
        return g


def _newton(lik: _Likelihood, p, iters: int = 25):
    """Polish with Newton steps on a finite-difference Hessian of the analytic gradient."""
    ll, g = lik.value_grad(p)
    for _ in range(iters):
        pg = lik.projected(p, g)
        if np.linalg.norm(pg) <= 0.1 * GRAD_TOL:
            break
        h = 1e-6
        H = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            H[:, j] = (lik.value_grad(p + e)[1] - lik.value_grad(p - e)[1]) / (2 * h)
        H = 0.5 * (H + H.T)
        free = pg != 0
        if not free.any():
            break
        step = np.zeros(2)
        try:
            step[free] = -np.linalg.solve(H[np.ix_(free, free)], g[free])
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-8:
            cand = np.clip(p + t * step, lik.lo_box, lik.hi_box)
            ll_c, g_c = lik.value_grad(cand)
            if ll_c >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        else:
            break
        p, ll, g = cand, ll_c, g_c
    return p, ll, g


def _floor_constrained(lik: _Likelihood, p0, max_iter: int):
    if lik.log_mass(p0)[0] < LOG_MASS_MIN:
        p0 = np.array([0.0, p0[1]])
    with warnings.catch_warnings():
        # SLSQP probes slightly past the box and clips; that is expected here
        warnings.simplefilter("ignore", RuntimeWarning)
        res = _slsqp(lik, p0, max_iter)
    p = np.clip(res.x, lik.lo_box, lik.hi_box)
    if lik.log_mass(p)[0] < LOG_MASS_MIN:
        p = p0
    ll, g = lik.value_grad(p)
    return p, ll, g


def _slsqp(lik: _Likelihood, p0, max_iter: int):
    return optimize.minimize(
        lambda p: tuple(-v / lik.n for v in lik.value_grad(p)),
        p0,
        jac=True,
        method="SLSQP",
        bounds=list(zip(lik.lo_box, lik.hi_box)),
        constraints=[{
            "type": "ineq",
            "fun": lambda p: lik.log_mass(p)[0] - LOG_MASS_MIN,
            "jac": lambda p: lik.log_mass(p)[1],
        }],
        options={"maxiter": max_iter, "ftol": 1e-15},
    )


def fit_truncnorm_mle(
    trace: ObservationTrace, max_iter: int = 500, start: Optional[tuple[float, float]] = None
) -> FitResult:
    """Maximise the truncated-normal log-likelihood over (mu, sigma).

    ``start`` overrides the moment-based initial point (used for warm
    starts).  ``converged`` reports whether the projected gradient of the
    total log-likelihood in standardised units fell below 1e-6.
    """
    n = len(trace)
    if n < 2:
        raise TraceError(f"MLE needs at least 2 samples, got {n}", path="samples")
    xs = trace.values
    if float(np.ptp(xs)) == 0.0:
        raise TraceError(
            "all samples are identical; the likelihood is unbounded. Use moments_init instead.",
            path="samples",
        )
    lik = _Likelihood(xs, trace.bounds)
    mu0, sigma0 = start if start is not None else moments_init(trace)
    p0 = np.clip(lik.standard(mu0, sigma0), lik.lo_box, lik.hi_box)

    def fun(p):
        ll, g = lik.value_grad(p)
        return -ll / n, -g / n

    res = optimize.minimize(
        fun,
        p0,
        jac=True,
        method="L-BFGS-B",
        bounds=list(zip(lik.lo_box, lik.hi_box)),
        options={"maxiter": max_iter, "gtol": 1e-12, "ftol": 1e-15},
    )
    p, ll, g = _newton(lik, np.asarray(res.x, dtype=float))
    if lik.log_mass(p)[0] < LOG_MASS_MIN:
        # The supremum sits in the exponential-tail limit; take the best
        # model that still has usable truncation mass.
        p, ll, g = _floor_constrained(lik, p0, max_iter)
        gc = lik.log_mass(p)[1]
        lam = max(0.0, float(np.dot(g, gc)) / float(np.dot(gc, gc)))
        g = g - lam * gc
    ll0 = lik.value_grad(p0)[0]
    if ll < ll0:
        # never return something worse than the starting point
        p = p0
        ll, g = lik.value_grad(p0)
    grad_norm = float(np.linalg.norm(lik.projected(p, g)))
    mu, sigma = lik.natural(p)
    model = TruncNormModel(mu, sigma, trace.bounds)
    return FitResult(
        model=model,
        loglik=ll,
        n_samples=n,
        converged=bool(grad_norm <= GRAD_TOL),
        iterations=int(res.nit),
        grad_norm=grad_norm,
    )


def loglik(trace: ObservationTrace, mu: float, sigma: float) -> float:
    lik = _Likelihood(trace.values, trace.bounds)
    return lik.value_grad(lik.standard(mu, sigma))[0]


# -- online refinement --------------------------------------------------------


@dataclass(frozen=True)
class OnlineState:
    """Accumulated samples plus the current estimate.

    Before two distinct samples exist the estimate is the moment start.
    """

    bounds: Bounds
    samples: tuple = ()
    fit: Optional[FitResult] = None
    history: tuple = field(default=(), repr=False)

    @classmethod
    def empty(cls, bounds) -> "OnlineState":
        return cls(Bounds.of(bounds))

    @property
    def params(self) -> tuple[float, float]:
        if self.fit is not None:
            return self.fit.mu, self.fit.sigma
        return moments_init(ObservationTrace(self.samples, self.bounds))

    @property
    def model(self) -> TruncNormModel:
        mu, sigma = self.params
        return TruncNormModel(mu, sigma, self.bounds)

    @property
    def trace(self) -> ObservationTrace:
        return ObservationTrace(self.samples, self.bounds)


def online_update(state: OnlineState, sample: float) -> OnlineState:
    """Append ``sample`` and refit from the previous estimate and from the moments."""
    x = float(sample)
    if not (math.isfinite(x) and state.bounds.contains(x)):
        raise TraceError(
            f"sample {x!r} outside declared bounds [{state.bounds.lo:g}, {state.bounds.hi:g}]",
            path="sample",
        )
    samples = state.samples + (x,)
    trace = ObservationTrace(samples, state.bounds)
    fit = None
    if len(samples) >= 2 and max(samples) > min(samples):
        # A warm start can sit on the flat near-uniform plateau (sigma at its
        # cap) long after the data stopped supporting it; keep the better of
        # the warm and moment starts.
        fit = fit_truncnorm_mle(trace)
        if state.fit is not None:
            warm = fit_truncnorm_mle(trace, start=state.params)
            if warm.loglik > fit.loglik:
                fit = warm
    params = (fit.mu, fit.sigma) if fit is not None else moments_init(trace)
    return OnlineState(state.bounds, samples, fit, state.history + (params,))


# -- trace files --------------------------------------------------------------


def load_trace(csv_path, sidecar=None, bounds=None, column: str = "value") -> ObservationTrace:
    """Read a ``frame,value`` CSV.  Bounds come from ``bounds`` or the JSON
    sidecar (default: same stem with ``.json``), which holds ``{"bounds": [lo, hi]}``.

    ``column`` selects another value column, e.g. ``capacity_gflops`` from a
    simulation CSV.
    """
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise ConfigError(f"trace file not found: {csv_path}", path=str(csv_path))
    if bounds is None:
        side = Path(sidecar) if sidecar else csv_path.with_suffix(".json")
        if not side.exists():
            raise ConfigError(f"bounds sidecar not found: {side}", path=str(side))
        try:
            meta = json.loads(side.read_text())
            bounds = meta["bounds"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"sidecar {side} lacks a 'bounds' pair: {exc}", path=f"{side}:bounds") from exc
    frames, values = [], []
    with csv_path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"frame", column} <= set(reader.fieldnames):
            raise ConfigError(f"{csv_path} needs columns 'frame' and {column!r}", path=str(csv_path))
        for row in reader:
            try:
                frames.append(int(row["frame"]))
                values.append(float(row[column]))
            except (TypeError, ValueError) as exc:
                raise ConfigError(
                    f"{csv_path} line {reader.line_num}: {exc}", path=f"{csv_path}:{reader.line_num}"
                ) from exc
    return ObservationTrace(tuple(values), Bounds.of(bounds), tuple(frames))


def write_trace(trace: ObservationTrace, csv_path) -> None:
    csv_path = Path(csv_path)
    frames = trace.timestamps if trace.timestamps is not None else range(len(trace))
    with csv_path.open("w", newline="") as fh:
        fh.write("frame,value\n")
        for f, v in zip(frames, trace.samples):
            fh.write(f"{f},{v:.9g}\n")
    csv_path.with_suffix(".json").write_text(json.dumps({"bounds": [trace.bounds.lo, trace.bounds.hi]}) + "\n")
