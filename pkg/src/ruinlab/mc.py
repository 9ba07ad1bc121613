"""Monte Carlo estimation of ruin and payout-tail probabilities.

Path ``i`` of a run draws from the stream ``(master_seed, i)`` only and the
reductions are integer counts, so results do not depend on the number of
worker threads.  Several capitals are estimated on one set of paths, which
makes the estimated curve exactly monotone in ``u``.

Paths whose reserve climbs above a cap are stopped and counted as survivors.
With ``beta > 0`` the default cap is the capital at which the Dufresne tail
drops below ``McConfig.cap_tol``, which bounds the resulting downward bias;
the bound is reported with every estimate.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numba
import numpy as np

from . import _kernels as K
from .bounds import dufresne_quantile_cap, dufresne_tail
from .errors import BadCapital, BadInput, DivergentFunctional
from .model import ModelParams
from .pathsim import SimGrid, kernel_params

Z95 = 1.96


def apply_thread_limit() -> None:
    """Honour ``RUINLAB_THREADS``; only speed is affected, never results."""
    value = os.environ.get("RUINLAB_THREADS")
    if not value:
        return
    try:
        n = int(value)
    except ValueError:
        return
    if n >= 1:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    grid: SimGrid = field(default_factory=SimGrid)
    master_seed: int = 0
    cap_tol: float = 1e-6

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise BadInput(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if int(self.master_seed) != self.master_seed or not 0 <= self.master_seed < 2**64:
            raise BadInput(f"master_seed must be an unsigned 64-bit integer, got {self.master_seed!r}")
        if not isinstance(self.grid, SimGrid):
            raise BadInput("grid must be a SimGrid")
        if not 0 <= self.cap_tol < 1:
            raise BadInput(f"cap_tol must lie in [0, 1), got {self.cap_tol!r}")


@dataclass(frozen=True)
class RuinEstimate:
    """Binomial estimate with a 95% Wilson interval.

    ``stderr`` is the Wilson half-width divided by 1.96.  ``cap`` is the
    capital above which paths were stopped as survivors and
    ``cap_bias_bound`` an upper bound on the probability lost that way.
    """

    u: float
    n_paths: int
    n_ruined: int
    p_hat: float
    ci_low: float
    ci_high: float
    horizon: float
    seed: int
    stderr: float
    n_capped: int = 0
    cap: float = math.inf
    cap_bias_bound: float = 0.0


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n < 1 or not 0 <= k <= n:
        raise BadInput(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    p = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    low = 0.0 if k == 0 else max(0.0, centre - half)
    high = 1.0 if k == n else min(1.0, centre + half)
    return low, high


def _estimate(u, n_ruined, n_paths, horizon, seed, n_capped=0, cap=math.inf, bias=0.0):
    low, high = wilson_interval(n_ruined, n_paths)
    p = n_ruined / n_paths
    return RuinEstimate(u=float(u), n_paths=int(n_paths), n_ruined=int(n_ruined), p_hat=p,
                        ci_low=min(low, p), ci_high=max(high, p), horizon=float(horizon),
                        seed=int(seed), stderr=(high - low) / (2 * Z95), n_capped=int(n_capped),
                        cap=float(cap), cap_bias_bound=float(bias))


def survivor_cap(params: ModelParams, cap_tol: float) -> tuple[float, float]:
    """Capital cap and the bound on the ruin probability it discards."""
    if cap_tol <= 0 or params.c == 0:
        return math.inf, 0.0
    if params.sigma == 0:
        # dX = aX - c between releases: no ruin once X >= c / a.
        return (params.c / params.a, 0.0) if params.a > 0 else (math.inf, 0.0)
    if params.kappa <= 0:
        return math.inf, 0.0
    cap = dufresne_quantile_cap(params, cap_tol)
    return cap, dufresne_tail(cap, params)


def simulate_ruin(us, params: ModelParams, cfg: McConfig, horizon: float | None = None):
    """Raw per-path ruin times and end states for the sorted capitals ``us``.

    Returns ``(ruin_time, status, cap, cap_bias)`` with arrays of shape
    ``(n_paths, len(us))``.
    """
    apply_thread_limit()
    us = np.ascontiguousarray(us, dtype=float)
    grid = cfg.grid
    cap, bias = survivor_cap(params, cfg.cap_tol)
    rt, st, _, _ = K.mc_ruin(us, np.uint64(cfg.master_seed), int(cfg.n_paths), *kernel_params(params),
                             grid.dt, float(horizon if horizon is not None else grid.horizon),
                             int(grid.refine_factor), int(grid.bisections), float(cap))
    return rt, st, cap, bias


def _check_capitals(us) -> np.ndarray:
    arr = np.asarray(us, dtype=float).ravel()
    if arr.size == 0:
        raise BadInput("no capital values given")
    if not np.all(np.isfinite(arr)):
        raise BadCapital("capital values must be finite")
    if np.any(arr < 0):
        raise BadCapital(f"initial capital must be >= 0, got {arr.min()}")
    return arr


def estimate_ruin_curve(us, params: ModelParams, cfg: McConfig) -> list[RuinEstimate]:
    """Ruin estimates for every capital in ``us`` from one coupled set of paths."""
    arr = _check_capitals(us)
    order = np.argsort(arr, kind="stable")
    sorted_u = arr[order]
    rt, st, cap, bias = simulate_ruin(sorted_u, params, cfg)
    ruined = np.count_nonzero(st == K.STATUS_RUINED, axis=0)
    capped = np.count_nonzero(st == K.STATUS_CAPPED, axis=0)
    out = [None] * arr.size
    for j, idx in enumerate(order):
        out[idx] = _estimate(sorted_u[j], ruined[j], cfg.n_paths, cfg.grid.horizon, cfg.master_seed,
                             capped[j], cap, bias)
    return out


def estimate_ruin(u: float, params: ModelParams, cfg: McConfig) -> RuinEstimate:
    """Fraction of ``cfg.n_paths`` paths ruined before ``cfg.grid.horizon``."""
    return estimate_ruin_curve([u], params, cfg)[0]


def horizon_curve(u: float, params: ModelParams, cfg: McConfig, horizons) -> list[RuinEstimate]:
    """Truncated estimates for each horizon, read off one run to the longest horizon.

    A path ruined before ``T`` is ruined before every later horizon, so the
    sequence is nondecreasing in ``T`` path by path.
    """
    hs = [float(h) for h in horizons]
    if not hs:
        raise BadInput("horizons must be a non-empty list")
    if any(not h > 0 for h in hs):
        raise BadInput("horizons must be positive")
    if any(b < a for a, b in zip(hs, hs[1:])):
        raise BadInput("horizons must be increasing")
    _check_capitals([u])
    rt, st, cap, bias = simulate_ruin(np.array([float(u)]), params, cfg, horizon=max(hs))
    times = np.where(st[:, 0] == K.STATUS_RUINED, rt[:, 0], np.inf)
    capped = int(np.count_nonzero(st[:, 0] == K.STATUS_CAPPED))
    return [_estimate(u, int(np.count_nonzero(times <= h)), cfg.n_paths, h, cfg.master_seed,
                      capped, cap, bias) for h in hs]


def tail_horizon(params: ModelParams, grid: SimGrid) -> float:
    """Horizon at which the payout integrand has decayed by ``1e-3`` on the drift scale."""
    return max(grid.horizon, math.log(1e3) / params.kappa)


def simulate_payout(params: ModelParams, cfg: McConfig, stop_above: float = math.inf,
                    horizon: float | None = None) -> np.ndarray:
    """Per-path values of ``c int_0^T exp(-eta_v) dv``; a path stops once above ``stop_above``."""
    apply_thread_limit()
    grid = cfg.grid
    h = float(horizon if horizon is not None else grid.horizon)
    return K.mc_payout(np.uint64(cfg.master_seed), int(cfg.n_paths), params.kappa, params.sigma,
                       params.c, grid.dt, h, int(grid.bisections), float(stop_above))


def estimate_tail_R_curve(us, params: ModelParams, cfg: McConfig) -> list[RuinEstimate]:
    """Estimates of ``P(R_inf > u)`` for every ``u`` from one set of payout paths."""
    arr = _check_capitals(us)
    if params.c == 0:
        return [_estimate(u, 0, cfg.n_paths, cfg.grid.horizon, cfg.master_seed) for u in arr]
    if not params.kappa > 0:
        raise DivergentFunctional(f"kappa = {params.kappa:g} <= 0: the discounted payout diverges")
    horizon = tail_horizon(params, cfg.grid)
    values = simulate_payout(params, cfg, stop_above=float(arr.max()), horizon=horizon)
    return [_estimate(u, int(np.count_nonzero(values > u)), cfg.n_paths, horizon, cfg.master_seed)
            for u in arr]


def estimate_tail_R(u: float, params: ModelParams, cfg: McConfig) -> RuinEstimate:
    """Estimate of ``P(R_inf > u)``, the upper bound for the ruin probability."""
    return estimate_tail_R_curve([u], params, cfg)[0]
