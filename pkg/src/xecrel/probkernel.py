"""Probability primitives: bounds, uniform and truncated-normal models, seeded sampling.

Both model types expose the same small surface (``pdf``, ``cdf``, ``sf``,
``ppf``, ``sample``) so the reliability code can treat them uniformly.
Everything is vectorised over numpy arrays and also accepts Python floats.

Random streams are numpy ``Generator`` objects over PCG64.  PCG64 output is
specified bit-for-bit by numpy, so a seed fixes a trace across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from xecrel.errors import ConfigError

# Truncation mass below this makes 1/Z meaningless.
Z_FLOOR = 1e-12

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def std_normal_cdf(x):
    """Standard normal CDF.

    Backed by ``scipy.special.ndtr`` (Cephes erf/erfc), accurate to a few ulp
    across the real line; saturates to 0/1 for ``|x| > 38``.
    """
    out = special.ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def std_normal_pdf(x):
    out = np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)
    return float(out) if np.ndim(out) == 0 else out


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Bounds:
    """Closed interval ``[lo, hi]``, e.g. a declared capacity or demand range in GFLOPS."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ConfigError(f"bounds must be finite, got [{self.lo}, {self.hi}]")
        if not lo < hi:
            raise ConfigError(f"bounds need lo < hi, got [{self.lo}, {self.hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi

    def scaled(self, k: float) -> "Bounds":
        return Bounds(self.lo * k, self.hi * k)

    @classmethod
    def of(cls, value) -> "Bounds":
        if isinstance(value, Bounds):
            return value
        lo, hi = value
        return cls(lo, hi)


@dataclass(frozen=True)
class UniformModel:
    """U(lo, hi) over the declared bounds."""

    bounds: Bounds

    def __post_init__(self):
        object.__setattr__(self, "bounds", Bounds.of(self.bounds))

    kind = "uniform"

    @property
    def density(self) -> float:
        return 1.0 / self.bounds.width

    def pdf(self, x):
        if isinstance(x, float):
            return self.density if self.bounds.lo <= x <= self.bounds.hi else 0.0
        x = np.asarray(x, dtype=float)
        inside = (x >= self.bounds.lo) & (x <= self.bounds.hi)
        return _scalar(np.where(inside, self.density, 0.0))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar(np.clip((x - self.bounds.lo) / self.bounds.width, 0.0, 1.0))

    def sf(self, x):
        if isinstance(x, float):
            return min(max((self.bounds.hi - x) / self.bounds.width, 0.0), 1.0)
        x = np.asarray(x, dtype=float)
        return _scalar(np.clip((self.bounds.hi - x) / self.bounds.width, 0.0, 1.0))

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return _scalar(self.bounds.lo + self.bounds.width * u)

    def mean(self) -> float:
        return self.bounds.mid

    def std(self) -> float:
        return self.bounds.width / math.sqrt(12.0)

    def scaled(self, k: float) -> "UniformModel":
        return UniformModel(self.bounds.scaled(k))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.ppf(rng.random(n))


@dataclass(frozen=True)
class TruncNormModel:
    """Normal(mu, sigma^2) restricted to ``bounds`` and renormalised."""

    mu: float
    sigma: float
    bounds: Bounds

    kind = "truncnorm"

    def __post_init__(self):
        object.__setattr__(self, "bounds", Bounds.of(self.bounds))
        mu, sigma = float(self.mu), float(self.sigma)
        if not math.isfinite(mu):
            raise ConfigError(f"mu must be finite, got {self.mu}")
        if not (math.isfinite(sigma) and sigma > 0):
            raise ConfigError(f"sigma must be finite and > 0, got {self.sigma}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        a, b = self.alpha, self.beta
        z = _mass(a, b)
        if not z >= Z_FLOOR:
            raise ConfigError(
                f"truncation mass {z:.3g} below floor {Z_FLOOR:g} for "
                f"mu={mu:g}, sigma={sigma:g}, bounds=[{self.bounds.lo:g}, {self.bounds.hi:g}]"
            )
        object.__setattr__(self, "_logz", _log_mass(a, b))
        object.__setattr__(self, "_z", math.exp(self._logz))

    @property
    def alpha(self) -> float:
        return (self.bounds.lo - self.mu) / self.sigma

    @property
    def beta(self) -> float:
        return (self.bounds.hi - self.mu) / self.sigma

    @property
    def z(self) -> float:
        return self._z

    @property
    def log_z(self) -> float:
        return self._logz

    def pdf(self, x):
        if isinstance(x, float):
            # scalar path: quadrature calls this millions of times
            if not self.bounds.lo <= x <= self.bounds.hi:
                return 0.0
            t = (x - self.mu) / self.sigma
            return math.exp(-0.5 * t * t - _LOG_SQRT_2PI - self._logz) / self.sigma
        x = np.asarray(x, dtype=float)
        t = (x - self.mu) / self.sigma
        dens = np.exp(-0.5 * t * t - _LOG_SQRT_2PI - self._logz) / self.sigma
        inside = (x >= self.bounds.lo) & (x <= self.bounds.hi)
        return _scalar(np.where(inside, dens, 0.0))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        t = (x - self.mu) / self.sigma
        return _scalar(-0.5 * t * t - _LOG_SQRT_2PI - self._logz - math.log(self.sigma))

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.bounds.lo, self.bounds.hi)
        t = (x - self.mu) / self.sigma
        a = self.alpha
        if a > 0:
            # Upper tail: subtract survival functions to keep precision.
            num = special.ndtr(-a) - special.ndtr(-t)
        else:
            num = special.ndtr(t) - special.ndtr(a)
        return _scalar(np.clip(num / self.z, 0.0, 1.0))

    def sf(self, x):
        if isinstance(x, float):
            t = (min(max(x, self.bounds.lo), self.bounds.hi) - self.mu) / self.sigma
            b = self.beta
            num = _ndtr(b) - _ndtr(t) if b < 0 else _ndtr(-t) - _ndtr(-b)
            return min(max(num / self.z, 0.0), 1.0)
        x = np.clip(np.asarray(x, dtype=float), self.bounds.lo, self.bounds.hi)
        t = (x - self.mu) / self.sigma
        b = self.beta
        if b < 0:
            num = special.ndtr(b) - special.ndtr(t)
        else:
            num = special.ndtr(-t) - special.ndtr(-b)
        return _scalar(np.clip(num / self.z, 0.0, 1.0))

    def ppf(self, u):
        """Inverse CDF; the sampling transform."""
        u = np.asarray(u, dtype=float)
        a, b = self.alpha, self.beta
        if a > 0:
            # Mirror into the lower tail where ndtri keeps relative accuracy.
            pa, pb = special.ndtr(-b), special.ndtr(-a)
            t = -special.ndtri(pb - u * (pb - pa))
        else:
            pa, pb = special.ndtr(a), special.ndtr(b)
            t = special.ndtri(pa + u * (pb - pa))
        x = self.mu + self.sigma * t
        return _scalar(np.clip(x, self.bounds.lo, self.bounds.hi))

    def mean(self) -> float:
        a, b = self.alpha, self.beta
        return self.mu + self.sigma * (_phi_over_z(a, self._logz) - _phi_over_z(b, self._logz))

    def scaled(self, k: float) -> "TruncNormModel":
        return TruncNormModel(self.mu * k, self.sigma * k, self.bounds.scaled(k))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.ppf(rng.random(n))


Model = Union[UniformModel, TruncNormModel]


def _ndtr(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _mass(a: float, b: float) -> float:
    if a > 0:
        return float(special.ndtr(-a) - special.ndtr(-b))
    return float(special.ndtr(b) - special.ndtr(a))


def _log_mass(a: float, b: float) -> float:
    """log(Phi(b) - Phi(a)) without cancellation in either tail."""
    if a > 0:
        a, b = -b, -a
    lb, la = special.log_ndtr(b), special.log_ndtr(a)
    return float(lb + np.log1p(-np.exp(la - lb)))


def _phi_over_z(t: float, log_z: float) -> float:
    if not math.isfinite(t):
        return 0.0
    return math.exp(-0.5 * t * t - _LOG_SQRT_2PI - log_z)


def truncnorm_pdf(m: TruncNormModel, x):
    return m.pdf(x)


def truncnorm_cdf(m: TruncNormModel, x):
    return m.cdf(x)


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; ``seed`` may be an int or a ``SeedSequence``."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed, k: int) -> list[np.random.Generator]:
    """``k`` statistically independent child streams derived from ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [make_rng(child) for child in ss.spawn(k)]


def sample(model: Model, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` i.i.d. draws by inverse-CDF transform of ``rng.random``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return model.sample(rng, n)
