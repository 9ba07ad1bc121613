"""Parameter records, derived quantities and claim-size laws.

The reserve follows

    dX_t = a X_t dt + sigma X_t dW_t - c dt + dZ_t,

where Z is a compound Poisson process with intensity ``alpha`` and positive
jumps drawn from ``claims``.  In the annuity reading, ``c`` is the payout
rate and the jumps are reserve releases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np

from .errors import BadUniform, DegenerateVolatility, InvalidParameters

# Integer tags understood by the compiled kernels.
CLAIM_EXPONENTIAL = 0
CLAIM_TABLE = 1


@dataclass(frozen=True)
class ExponentialClaims:
    """Exponential claim sizes with mean ``mu``."""

    mu: float

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise InvalidParameters(f"exponential mean must be positive, got {self.mu!r}")

    @property
    def mean(self) -> float:
        return self.mu

    def inverse_cdf(self, u: float) -> float:
        return -self.mu * math.log1p(-u)

    def kernel_spec(self):
        return CLAIM_EXPONENTIAL, float(self.mu), np.zeros(1)


@dataclass(frozen=True)
class EmpiricalClaims:
    """Arbitrary positive claim law given through its quantile function.

    The compiled simulators cannot call Python, so the quantile function is
    tabulated on ``table_size`` equally spaced interior points and linearly
    interpolated; :func:`claim_sample` evaluates ``inverse_cdf`` exactly.
    """

    inverse_cdf: Callable[[float], float]
    table_size: int = 4096
    table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.table_size < 2:
            raise InvalidParameters("table_size must be at least 2")
        probs = (np.arange(self.table_size) + 0.5) / self.table_size
        values = np.array([float(self.inverse_cdf(p)) for p in probs])
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise InvalidParameters("quantile function must be finite and positive on (0, 1)")
        if np.any(np.diff(values) < 0):
            raise InvalidParameters("quantile function must be nondecreasing")
        object.__setattr__(self, "table", values)

    @classmethod
    def from_samples(cls, samples, table_size: int = 4096) -> "EmpiricalClaims":
        data = np.sort(np.asarray(samples, dtype=float))
        if data.size == 0:
            raise InvalidParameters("no samples given")
        return cls(lambda p: float(np.quantile(data, p)), table_size=table_size)

    @property
    def mean(self) -> float:
        return float(self.table.mean())

    def kernel_spec(self):
        return CLAIM_TABLE, 0.0, self.table


ClaimDist = Union[ExponentialClaims, EmpiricalClaims]


@dataclass(frozen=True)
class ModelParams:
    """The five-parameter insurance/market model.

    Parameters
    ----------
    a : float
        Instantaneous rate of return of the risky asset.
    sigma : float
        Volatility, ``sigma >= 0``.
    c : float
        Annuity payout intensity, ``c >= 0``.
    alpha : float
        Intensity of the Poisson reserve releases, ``alpha > 0``.  ``alpha = 0``
        is accepted for jump-free test processes.
    claims : ClaimDist
        Law of the released amounts.
    """

    a: float
    sigma: float
    c: float
    alpha: float
    claims: ClaimDist = field(default_factory=lambda: ExponentialClaims(1.0))

    def __post_init__(self):
        for name in ("a", "sigma", "c", "alpha"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or not math.isfinite(value):
                raise InvalidParameters(f"{name} must be a finite real, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.sigma < 0:
            raise InvalidParameters(f"sigma must be >= 0, got {self.sigma}")
        if self.c < 0:
            raise InvalidParameters(f"c must be >= 0, got {self.c}")
        if self.alpha < 0:
            raise InvalidParameters(f"alpha must be >= 0, got {self.alpha}")
        if not isinstance(self.claims, (ExponentialClaims, EmpiricalClaims)):
            raise InvalidParameters(f"unsupported claim law {self.claims!r}")

    @property
    def kappa(self) -> float:
        return self.a - 0.5 * self.sigma**2

    @property
    def beta(self) -> float:
        return derived_params(self).beta

    def with_share(self, share: float) -> "ModelParams":
        """Model in which only ``share`` of the reserve is held in the risky asset."""
        if not 0 < share <= 1:
            raise InvalidParameters(f"share must lie in (0, 1], got {share}")
        return replace(self, a=self.a * share, sigma=self.sigma * share)


@dataclass(frozen=True)
class Derived:
    kappa: float
    _beta: float | None

    @property
    def beta(self) -> float:
        if self._beta is None:
            raise DegenerateVolatility("beta = 2*kappa/sigma^2 is undefined for sigma = 0")
        return self._beta


def derived_params(params: ModelParams) -> Derived:
    """Return ``kappa = a - sigma^2/2`` and ``beta = 2 kappa / sigma^2``."""
    kappa = params.a - 0.5 * params.sigma**2
    beta = 2.0 * kappa / params.sigma**2 if params.sigma > 0 else None
    return Derived(kappa, beta)


def max_risky_share(a: float, sigma: float) -> float:
    """Largest share of the reserve that may be invested without certain ruin.

    Investing a share ``g`` replaces ``(a, sigma)`` by ``(a g, sigma g)``, so
    the regime index becomes ``2a/(sigma^2 g) - 1``, positive iff
    ``g < 2a/sigma^2``.  The bound is an open one; the returned value is
    capped at full investment.
    """
    if sigma == 0:
        raise DegenerateVolatility("max_risky_share needs sigma > 0")
    if sigma < 0:
        raise InvalidParameters(f"sigma must be positive, got {sigma}")
    if a < 0:
        raise InvalidParameters(f"a must be >= 0, got {a}")
    return min(1.0, 2.0 * a / sigma**2)


def claim_sample(dist: ClaimDist, uniform: float) -> float:
    """Inverse-CDF draw of one claim from a uniform in the open unit interval."""
    if not 0.0 < uniform < 1.0:
        raise BadUniform(f"uniform must lie strictly inside (0, 1), got {uniform!r}")
    return float(dist.inverse_cdf(uniform))
