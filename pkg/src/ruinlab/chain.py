"""The reserve observed at release times, and random-coefficient autoregressions.

At the ``k``-th release ``T_k`` the reserve satisfies ``Y_k = M_k Y_{k-1} + Q_k``
with ``M_k = exp(eta_{T_k} - eta_{T_{k-1}})`` and
``Q_k = xi_k - c int_{T_{k-1}}^{T_k} exp(eta_{T_k} - eta_v) dv``.  The pairs
``(M_k, Q_k)`` are i.i.d., so the chain is a perpetuity-type recursion whose
stationary law is the series ``zeta = b_1 + sum_k b_k a_1 ... a_{k-1}``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from . import _kernels as K
from .errors import BadInput, DegenerateVolatility, NonContracting, WrongRegime
from .model import ModelParams
from .pathsim import SimGrid, kernel_params
from .rng import RngStream

MAX_ZETA_STEPS = 1_000_000


@dataclass(frozen=True)
class ChainStep:
    T: float
    xi: float
    M: float
    Q: float
    Y: float


@dataclass(frozen=True)
class ChainPath:
    """Chain trajectory stored column-wise; ``steps`` gives the row view."""

    u: float
    times: np.ndarray
    xis: np.ndarray
    mults: np.ndarray
    qs: np.ndarray
    ys: np.ndarray
    kappa: float
    sigma: float

    def __len__(self):
        return self.times.size

    @property
    def steps(self) -> tuple[ChainStep, ...]:
        return tuple(ChainStep(float(t), float(x), float(m), float(q), float(y))
                     for t, x, m, q, y in zip(self.times, self.xis, self.mults, self.qs, self.ys))

    def first_ruin(self) -> int | None:
        """First ``k`` (1-based) with ``Y_k <= 0``, or ``None``."""
        hits = np.flatnonzero(self.ys <= 0.0)
        return int(hits[0]) + 1 if hits.size else None


def simulate_chain(u: float, params: ModelParams, n: int, grid: SimGrid, stream: RngStream) -> ChainPath:
    """First ``n`` release times of the reserve started from ``u``.

    Uses the same draws, in the same order, as :func:`ruinlab.pathsim.simulate_path`
    on the same stream, so ``Y_k`` matches the simulated reserve after the
    ``k``-th release up to quadrature error.
    """
    if int(n) != n or n < 1:
        raise BadInput(f"n must be a positive integer, got {n!r}")
    if not isinstance(grid, SimGrid):
        from .errors import BadGrid
        raise BadGrid("grid must be a SimGrid")
    if params.alpha <= 0:
        raise BadInput("the embedded chain needs alpha > 0")
    n = int(n)
    cols = [np.empty(n) for _ in range(5)]
    uctr, nctr = K.run_chain(float(u), stream.ukey, stream.nkey, stream.uctr, stream.nctr,
                             *kernel_params(params), grid.dt, int(grid.bisections), *cols)
    stream.uctr, stream.nctr = int(uctr), int(nctr)
    return ChainPath(float(u), *cols, kappa=params.kappa, sigma=params.sigma)


def sample_chain_steps(params: ModelParams, cfg) -> tuple[np.ndarray, np.ndarray]:
    """``(M_1, Q_1)`` from ``cfg.n_paths`` independent streams of ``cfg.master_seed``."""
    from .mc import apply_thread_limit

    apply_thread_limit()
    if params.alpha <= 0:
        raise BadInput("the embedded chain needs alpha > 0")
    return K.mc_chain_step(np.uint64(cfg.master_seed), int(cfg.n_paths), *kernel_params(params),
                           cfg.grid.dt, int(cfg.grid.bisections))


def ladder_epochs(V) -> tuple[int, ...]:
    """Strict descending ladder indices (1-based) of ``V_1, V_2, ...`` with ``V_0 = 0``."""
    values = np.asarray(V, dtype=float).ravel()
    if values.size == 0:
        raise BadInput("V must be non-empty")
    epochs = []
    level = 0.0
    for k, v in enumerate(values, start=1):
        if v - level < 0:
            epochs.append(k)
            level = v
    return tuple(epochs)


@dataclass(frozen=True)
class LadderChain:
    epochs: tuple[int, ...]
    a: np.ndarray
    b: np.ndarray
    y: np.ndarray
    u: float


def brownian_at_releases(chain: ChainPath, sigma: float | None = None) -> np.ndarray:
    """``W_{T_k}`` recovered from the multipliers: ``ln M_k = kappa dT + sigma dW``."""
    sigma = chain.sigma if sigma is None else sigma
    if not sigma > 0:
        raise DegenerateVolatility("ladder epochs need sigma > 0")
    return (np.cumsum(np.log(chain.mults)) - chain.kappa * chain.times) / sigma


def build_ladder_chain(chain: ChainPath, sigma: float | None = None) -> LadderChain:
    """Subsample the chain at the descending ladder epochs of ``W``.

    ``a_k`` is the product of the multipliers over block ``k`` and ``b_k`` the
    matching product-sum of the ``Q``'s, so ``y_k = a_k y_{k-1} + b_k`` with
    ``y_k = Y_{theta_k}``.  Only for ``kappa = 0`` is ``a_k < 1`` guaranteed.
    """
    if chain.kappa != 0:
        warnings.warn(f"kappa = {chain.kappa:g} != 0: ladder coefficients need not contract",
                      WrongRegime, stacklevel=2)
    epochs = ladder_epochs(brownian_at_releases(chain, sigma))
    a = np.empty(len(epochs))
    b = np.empty(len(epochs))
    prev = 0
    for k, theta in enumerate(epochs):
        m = chain.mults[prev:theta]
        q = chain.qs[prev:theta]
        # tail[l] = prod_{j > l} m[j] within the block
        tail = np.append(np.cumprod(m[::-1])[::-1][1:], 1.0)
        a[k] = np.prod(m)
        b[k] = np.sum(tail * q)
        prev = theta
    y = chain.ys[np.asarray(epochs, dtype=int) - 1] if epochs else np.empty(0)
    return LadderChain(epochs=epochs, a=a, b=b, y=y, u=chain.u)


class CoefficientSampler(Protocol):
    """Source of i.i.d. ``(a, b)`` pairs drawn from an :class:`RngStream`."""

    def draw(self, stream: RngStream, n: int) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass(frozen=True)
class ConstantCoefficients:
    a: float
    b: float

    def draw(self, stream, n):
        return np.full(n, float(self.a)), np.full(n, float(self.b))


@dataclass(frozen=True)
class MappedCoefficients:
    """Synthetic law: ``transform`` maps an ``(n, k)`` array of uniforms to ``(a, b)``."""

    transform: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    n_uniforms: int = 2

    def draw(self, stream, n):
        u = stream.uniforms(n * self.n_uniforms).reshape(n, self.n_uniforms)
        a, b = self.transform(u)
        return np.asarray(a, dtype=float), np.asarray(b, dtype=float)


@dataclass(frozen=True)
class InsuranceCoefficients:
    """The release-time pairs ``(M, Q)`` of the reserve model.

    Pair ``i`` drawn from a stream comes from the sub-stream keyed by the
    stream's uniform counter, which is advanced by one per pair.
    """

    params: ModelParams
    grid: SimGrid = SimGrid()

    def draw(self, stream, n):
        start = stream.uctr
        stream.uctr += n
        return K.chain_steps_keyed(stream.key, np.uint64(start), int(n), *kernel_params(self.params),
                                   self.grid.dt, int(self.grid.bisections))


@dataclass(frozen=True)
class StationaryLimit:
    """Samples of the perpetuity with the product ``|a_1 ... a_n|`` left at truncation."""

    samples: np.ndarray
    remainders: np.ndarray
    n_terms: np.ndarray


def stationary_samples(sampler: CoefficientSampler, n: int, stream: RngStream, tol: float = 1e-12,
                       block: int = 32, max_steps: int = MAX_ZETA_STEPS) -> StationaryLimit:
    """``n`` independent truncated perpetuities, summed until ``|a_1 ... a_k| < tol``."""
    if not tol > 0:
        raise BadInput(f"tol must be positive, got {tol}")
    values = np.zeros(n)
    prod = np.ones(n)
    terms = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    steps = 0
    while active.size:
        if steps >= max_steps:
            raise NonContracting(f"{active.size} products still >= {tol:g} after {steps} steps")
        m = active.size
        a, b = sampler.draw(stream, m * block)
        a = a.reshape(m, block)
        b = b.reshape(m, block)
        p0 = prod[active][:, None]
        cp = p0 * np.cumprod(a, axis=1)
        before = np.concatenate([p0, cp[:, :-1]], axis=1)
        small = np.abs(cp) < tol
        done = small.any(axis=1)
        stop = np.where(done, small.argmax(axis=1), block - 1)
        keep = np.arange(block)[None, :] <= stop[:, None]
        values[active] += np.sum(np.where(keep, before * b, 0.0), axis=1)
        prod[active] = cp[np.arange(m), stop]
        terms[active] += stop + 1
        active = active[~done]
        steps += block
    return StationaryLimit(values, np.abs(prod), terms)


def sample_zeta(coeff_sampler: CoefficientSampler, tol: float = 1e-12, stream: RngStream | None = None,
                max_steps: int = MAX_ZETA_STEPS) -> float:
    """One draw of ``zeta = b_1 + sum_{k >= 2} b_k a_1 ... a_{k-1}``."""
    stream = stream if stream is not None else RngStream(0, 0)
    return float(stationary_samples(coeff_sampler, 1, stream, tol=tol, block=16,
                                    max_steps=max_steps).samples[0])


def chain_occupancy(coeff_sampler: CoefficientSampler, x0: float, N: int, stream: RngStream,
                    burn_in: int = 0) -> np.ndarray:
    """States ``x_{burn_in+1}, ..., x_{burn_in+N}`` of ``x_n = a_n x_{n-1} + b_n``."""
    if int(N) != N or N < 1:
        raise BadInput(f"N must be a positive integer, got {N!r}")
    a, b = coeff_sampler.draw(stream, int(N) + int(burn_in))
    return K.autoregression(float(x0), np.ascontiguousarray(a), np.ascontiguousarray(b))[int(burn_in):]


def ergodic_average(f: Callable[[np.ndarray], np.ndarray], x0: float, coeff_sampler: CoefficientSampler,
                    N: int, stream: RngStream) -> float:
    """``(1/N) sum_{n <= N} f(x_n)``; ``f`` is applied to the whole state array."""
    xs = chain_occupancy(coeff_sampler, x0, N, stream)
    return float(np.mean(np.broadcast_to(f(xs), xs.shape)))


def ruin_indicator_test_function(x):
    """``1`` below ``-1``, ``|x|`` on ``(-1, 0)``, ``0`` on the positive half-line."""
    x = np.asarray(x, dtype=float)
    return np.where(x <= -1.0, 1.0, np.where(x < 0.0, -x, 0.0))


def coupled_chain_gap(u: float, params: ModelParams, n_paths: int, n_steps: int, grid: SimGrid,
                      reference_bisections: int, chain_bisections=None, seed: int = 0) -> np.ndarray:
    """Per-path ``max_k |X_{T_k} - Y_k|`` on shared noise.

    ``Y`` is the chain at step ``grid.dt`` refined by each entry of
    ``chain_bisections`` (default ``grid.bisections``); ``X`` is the reserve
    path on the same main lanes refined by ``reference_bisections`` bridge
    levels, so the gap measures the chain's quadrature error.  Releases after
    ruin of ``X`` are not compared.  Returns shape ``(n_paths, len(chain_bisections))``.
    """
    levels = [int(grid.bisections)] if chain_bisections is None else [int(b) for b in chain_bisections]
    if not levels or reference_bisections <= max(levels):
        raise BadInput("the reference must be finer than every chain grid")
    gaps = np.zeros((n_paths, len(levels)))
    rt = np.empty(1)
    st = np.empty(1, dtype=np.int8)
    tv = np.empty(1)
    us = np.array([float(u)])
    kp = kernel_params(params)
    for i in range(n_paths):
        stream = RngStream(seed, i)
        ukey, nkey = stream.ukey, stream.nkey
        rec_t = np.empty(n_steps)
        rec_x = np.empty(n_steps)
        n_rec = 0
        for j, level in enumerate(levels):
            cols = [np.empty(n_steps) for _ in range(5)]
            K.run_chain(float(u), ukey, nkey, 0, 0, *kp, grid.dt, level, *cols)
            if j == 0:
                horizon = cols[0][-1] * (1 + 1e-12) + 1e-12
                _, _, _, n_rec = K.run_path(us, ukey, nkey, 0, 0, *kp, grid.dt, horizon, 1,
                                            int(reference_bisections), math.inf, rt, st, tv, rec_t, rec_x)
                n_rec = min(n_rec, n_steps)
            if n_rec:
                gaps[i, j] = np.max(np.abs(rec_x[:n_rec] - cols[4][:n_rec]))
    return gaps
