"""Closed-form and constructive bounds on the ruin probability.

The upper bound compares the reserve with its jump-free lower process, whose
ruin is the event ``R_inf > u`` for the discounted payout ``R``.  By
Dufresne's identity ``R_inf`` is distributed as ``2c / (sigma^2 gamma)`` with
``gamma ~ Gamma(beta, 1)``.  The lower bound is certified from one step of the
embedded chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import BadB, BadCapital, DivergentFunctional, InconclusiveCert, MgfDiverges
from .model import ModelParams, derived_params
from .special import gammainc_lower


def _positive_beta(params: ModelParams) -> float:
    beta = derived_params(params).beta
    if not beta > 0:
        raise DivergentFunctional(f"beta = {beta:g} <= 0: the discounted payout diverges")
    return beta


def dufresne_tail(u: float, params: ModelParams) -> float:
    """``P(R_inf > u) = P(beta, 2c / (sigma^2 u))``."""
    beta = _positive_beta(params)
    if not u > 0:
        raise BadCapital(f"u must be positive, got {u}")
    return gammainc_lower(beta, 2.0 * params.c / (params.sigma**2 * u))


def upper_asymptote_constant(params: ModelParams) -> float:
    """Constant ``C`` in ``limsup u^beta Psi(u) <= C``."""
    beta = _positive_beta(params)
    scale = 2.0 * params.c / params.sigma**2
    return math.exp(beta * math.log(scale) - math.log(beta) - math.lgamma(beta)) if scale > 0 else 0.0


def dufresne_quantile_cap(params: ModelParams, tol: float) -> float:
    """Smallest capital ``x`` with ``P(R_inf > x) <= tol``, found by bisection.

    Ruin from capital ``x`` is at most ``P(R_inf > x)``, so stopping a path
    once it reaches ``x`` understates the ruin probability by at most ``tol``.
    """
    beta = _positive_beta(params)
    scale = 2.0 * params.c / params.sigma**2
    if scale == 0:
        return math.inf
    # P(beta, y) is increasing in y; find y with P(beta, y) = tol.
    lo, hi = -800.0, math.log(beta + 50.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gammainc_lower(beta, math.exp(mid)) > tol:
            hi = mid
        else:
            lo = mid
    return scale / math.exp(lo)


@dataclass(frozen=True)
class LowerBoundCert:
    """Certificate for ``liminf u^beta_star Psi(u) > 0``.

    ``p_gamma`` estimates ``P(M_1 <= rho, Q_1 <= 1/rho)`` and ``p_d``
    estimates ``P(M_1 <= 1/rho, Q_1 <= -B)``; both must be positive.
    """

    rho: float
    B: float
    B1: float
    p_gamma: float
    p_d: float
    beta_star: float
    n_samples: int
    n_gamma: int
    n_d: int
    seed: int


def lower_bound_exponent(params: ModelParams, rho: float = 0.5, B: float = 9.0, cfg=None,
                         margin: float = 1e-6) -> LowerBoundCert:
    if not 0 < rho < 1:
        raise BadB(f"rho must lie in (0, 1), got {rho}")
    threshold = 1.0 / (rho**2 * (1.0 - rho))
    B1 = B - threshold
    if not B1 > 0:
        raise BadB(f"B = {B} must exceed 1/(rho^2 (1 - rho)) = {threshold:g}")
    from .chain import sample_chain_steps
    from .mc import McConfig

    cfg = cfg if cfg is not None else McConfig()
    mults, qs = sample_chain_steps(params, cfg)
    n_gamma = int(np.count_nonzero((mults <= rho) & (qs <= 1.0 / rho)))
    n_d = int(np.count_nonzero((mults <= 1.0 / rho) & (qs <= -B)))
    n = mults.size
    if n_gamma == 0:
        raise InconclusiveCert(f"no sample of the contraction event among {n}")
    if n_d == 0:
        raise InconclusiveCert(f"no sample of the deficit event among {n}")
    p_gamma = n_gamma / n
    p_d = n_d / n
    beta_star = math.log(p_gamma) / math.log(rho) * (1.0 + margin)
    return LowerBoundCert(rho=rho, B=B, B1=B1, p_gamma=p_gamma, p_d=p_d, beta_star=beta_star,
                          n_samples=n, n_gamma=n_gamma, n_d=n_d, seed=cfg.master_seed)


def running_max_mgf(q: float, drift: float, alpha_rate: float) -> float:
    """``E exp(q max_{v <= nu} (drift v + W_v))`` for ``nu ~ Exp(alpha_rate)``.

    The maximum is exponential with rate ``sqrt(2 alpha + drift^2) - drift``.
    """
    if not alpha_rate > 0:
        raise MgfDiverges(f"alpha_rate must be positive, got {alpha_rate}")
    lam = math.sqrt(2.0 * alpha_rate + drift**2) - drift
    if not lam - q > 0:
        raise MgfDiverges(f"q = {q} is not below the critical value {lam:g}")
    return lam / (lam - q)


def running_max_mgf_mc(q: float, drift: float, alpha_rate: float, n_paths: int = 100_000,
                       dt: float = 1e-4, seed: int = 0) -> tuple[float, float]:
    """Grid Monte Carlo estimate of :func:`running_max_mgf`; returns ``(mean, stderr)``."""
    running_max_mgf(q, drift, alpha_rate)
    from .mc import apply_thread_limit

    apply_thread_limit()
    maxima = K.mc_running_max(np.uint64(seed), int(n_paths), float(drift), float(alpha_rate), float(dt))
    values = np.exp(q * maxima)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))
