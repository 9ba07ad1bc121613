"""Survival probability for exponential releases via a second-order ODE.

With exponential claims of mean ``mu`` the survival probability ``Phi``
solves an integro-differential equation whose kernel can be removed by one
differentiation.  ``G = Phi'`` then satisfies

    G'' - p(u) G' + p0(u) G = 0,
    p(u)  = 1/mu - 2 (1 + a/sigma^2) / u + (2c/sigma^2) / u^2,
    p0(u) = -(2a / (mu sigma^2)) / u + (a - alpha + c/mu) (2/sigma^2) / u^2.

At infinity the two solutions behave like ``u^(-2a/sigma^2)`` and
``u^(-2) e^(u/mu)``.  Only the decaying one is admissible, so the equation is
integrated backward from a large ``u_max`` with the power-law log-derivative as
seed; the growing mode decays in that direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import BadInput, BadTail, ModeContamination, NeedsExponentialClaims, NoPowerLawRegime
from .model import ExponentialClaims, ModelParams


@dataclass(frozen=True)
class OdeCoeffs:
    """Coefficients of ``G'' - p G' + p0 G = 0`` and the normal-form potential ``q``.

    Substituting ``G = exp(int p / 2) Z`` gives ``Z'' = q Z`` with
    ``q = p^2/4 - p'/2 - p0``.
    """

    p: Callable[[float], float]
    dp: Callable[[float], float]
    p0: Callable[[float], float]
    q: Callable[[float], float]
    mu: float


def _exponential_mean(params: ModelParams) -> float:
    if not isinstance(params.claims, ExponentialClaims):
        raise NeedsExponentialClaims("the ODE reduction needs exponential claim sizes")
    return params.claims.mu


def coeffs(params: ModelParams) -> OdeCoeffs:
    mu = _exponential_mean(params)
    if not params.sigma > 0:
        raise NoPowerLawRegime("the ODE needs sigma > 0")
    s2 = params.sigma**2
    a, c, alpha = params.a, params.c, params.alpha
    k1 = 2.0 * (1.0 + a / s2)
    k2 = 2.0 * c / s2
    m1 = 2.0 * a / (mu * s2)
    m2 = (a - alpha + c / mu) * 2.0 / s2

    def p(u):
        return 1.0 / mu - k1 / u + k2 / u**2

    def dp(u):
        return k1 / u**2 - 2.0 * k2 / u**3

    def p0(u):
        return -m1 / u + m2 / u**2

    def q(u):
        return p(u) ** 2 / 4.0 - dp(u) / 2.0 - p0(u)

    return OdeCoeffs(p=p, dp=dp, p0=p0, q=q, mu=mu)


def _check_domain(params: ModelParams, u_min: float, u_max: float, n: int) -> float:
    mu = _exponential_mean(params)
    if not params.sigma > 0:
        raise NoPowerLawRegime("the ODE needs sigma > 0")
    beta = params.beta
    if not beta > 0:
        raise NoPowerLawRegime(f"beta = {beta:g} <= 0: ruin is certain, no power-law tail")
    if not params.alpha > 0:
        raise BadInput("the ODE needs alpha > 0")
    if not 0 < u_min <= 1e-3 * mu:
        raise BadInput(f"u_min must lie in (0, 1e-3 mu] = (0, {1e-3 * mu:g}], got {u_min}")
    if u_max < 50.0 * max(mu, params.c / params.alpha):
        raise BadInput(f"u_max = {u_max} is below 50 max(mu, c/alpha)")
    if int(n) != n or n < 16:
        raise BadInput(f"n must be an integer >= 16, got {n!r}")
    return beta


def default_domain(params: ModelParams) -> tuple[float, float]:
    mu = _exponential_mean(params)
    scale = max(mu, params.c / params.alpha) if params.alpha > 0 else mu
    return 1e-3 * mu, max(1e3 * mu, 50.0 * scale)


def _integrate(params, t_from, t_to, y0, t_eval, rtol, atol):
    cf = coeffs(params)

    def rhs(t, y):
        u = math.exp(t)
        return (u * y[1], u * (cf.p(u) * y[1] - cf.p0(u) * y[0]))

    return solve_ivp(rhs, (t_from, t_to), y0, method="RK45", t_eval=t_eval, rtol=rtol, atol=atol)


def solve_G(params: ModelParams, u_min: float | None = None, u_max: float | None = None, n: int = 4001,
            rtol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Decaying solution ``G`` on ``n`` log-spaced points of ``[u_min, u_max]``, scaled to ``G(u_max) = 1``.

    The integration runs in ``ln u`` from ``u_max`` down to ``u_min`` with
    the seed ``G'(u_max) = -(2a/sigma^2) / u_max``.
    """
    d_min, d_max = default_domain(params)
    u_min = d_min if u_min is None else float(u_min)
    u_max = d_max if u_max is None else float(u_max)
    _check_domain(params, u_min, u_max, n)
    ts = np.linspace(math.log(u_max), math.log(u_min), int(n))
    seed = [1.0, -(2.0 * params.a / params.sigma**2) / u_max]
    sol = _integrate(params, ts[0], ts[-1], seed, ts, rtol, 1e-300)
    if sol.status != 0:
        raise ModeContamination(f"integration failed: {sol.message}")
    grid = np.exp(ts[::-1])
    grid[0], grid[-1] = u_min, u_max
    g = sol.y[0][::-1].copy()
    bad = np.flatnonzero(~(g > 0))
    if bad.size:
        where = float(grid[bad[-1]])
        raise ModeContamination(f"G changes sign near u = {where:g}", location=where)
    return grid, g


@dataclass(frozen=True)
class SurvivalSolution:
    """Survival probability on a grid, normalised so that ``phi[0] = 0``.

    ``k_hat`` is the constant in ``1 - Phi(u) ~ k_hat u^(-beta)``; beyond the
    grid the survival probability is continued by that power law.
    """

    grid: np.ndarray
    phi: np.ndarray
    g: np.ndarray
    k_hat: float
    c2: float
    beta: float
    tail: float

    @property
    def psi(self) -> np.ndarray:
        return 1.0 - self.phi

    def ruin_probability(self, u) -> np.ndarray:
        """``1 - Phi`` at ``u``: log-linear interpolation inside, power law above the grid."""
        u = np.asarray(u, dtype=float)
        lg = np.log(self.grid)
        inside = np.interp(np.log(np.clip(u, self.grid[0], self.grid[-1])), lg, self.psi)
        above = self.k_hat * np.power(np.maximum(u, self.grid[-1]), -self.beta)
        out = np.where(u > self.grid[-1], above, inside)
        return np.where(u <= self.grid[0], 1.0, out)

    def k_profile(self) -> np.ndarray:
        """``u^beta (1 - Phi(u))`` on the grid; tends to ``k_hat`` at the top."""
        return self.grid**self.beta * self.psi


def survival_from_G(grid, g, params: ModelParams) -> SurvivalSolution:
    """Normalise ``G`` into the survival probability with a power-law tail beyond the grid."""
    grid = np.asarray(grid, dtype=float)
    g = np.asarray(g, dtype=float)
    if grid.shape != g.shape or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise BadInput("grid must be strictly increasing and match g")
    if np.any(~(g > 0)):
        raise BadInput("g must be positive")
    beta = params.beta
    if not beta > 0:
        raise NoPowerLawRegime(f"beta = {beta:g} <= 0")
    tail = g[-1] * grid[-1] / beta
    # upper[i] = int_{u_i}^{u_max} g by the trapezoid rule
    pieces = 0.5 * np.diff(grid) * (g[1:] + g[:-1])
    upper = np.append(np.cumsum(pieces[::-1])[::-1], 0.0)
    total = upper[0] + tail
    if not (math.isfinite(tail) and math.isfinite(total) and total > 0):
        raise BadTail(f"tail mass {tail!r} is not finite")
    c2 = 1.0 / total
    phi = 1.0 - c2 * (upper + tail)
    phi[0] = 0.0
    k_hat = grid[-1] ** beta * c2 * tail
    return SurvivalSolution(grid=grid, phi=phi, g=g, k_hat=float(k_hat), c2=float(c2), beta=float(beta),
                            tail=float(tail))


def solve_survival(params: ModelParams, u_min: float | None = None, u_max: float | None = None,
                   n: int = 4001) -> SurvivalSolution:
    grid, g = solve_G(params, u_min, u_max, n)
    return survival_from_G(grid, g, params)


def _kernel_average(grid, phi, mu, j_top):
    """``J(u_i) = E Phi(u_i + xi)`` for ``xi ~ Exp(mu)``, by backward recursion.

    ``J' = (J - Phi) / mu``; with ``Phi`` linear between nodes every step is
    integrated exactly.
    """
    n = grid.size
    J = np.empty(n)
    J[-1] = j_top
    h = np.diff(grid)
    r = h / mu
    decay = np.exp(-r)
    e0 = -np.expm1(-r)
    e1 = mu * (e0 - r * decay)
    slope = np.diff(phi) / h
    for i in range(n - 2, -1, -1):
        J[i] = phi[i] * e0[i] + slope[i] * e1[i] + decay[i] * J[i + 1]
    return J


def integro_residual(grid, phi, params: ModelParams, tail_k: float = 0.0, tail_beta: float = 1.0) -> np.ndarray:
    """Integro-differential operator divided by ``alpha`` at the interior nodes.

    ``Phi'`` and ``Phi''`` are second-order finite differences on the grid and
    the kernel term is continued beyond the grid by ``1 - tail_k u^(-tail_beta)``.
    """
    mu = _exponential_mean(params)
    grid = np.asarray(grid, dtype=float)
    phi = np.asarray(phi, dtype=float)
    top = grid[-1]
    if tail_k:
        mass, _ = quad(lambda y: (top + y) ** (-tail_beta) * math.exp(-y / mu) / mu, 0.0, math.inf,
                       epsabs=1e-15, epsrel=1e-12)
        j_top = 1.0 - tail_k * mass
    else:
        j_top = phi[-1]
    J = _kernel_average(grid, phi, mu, j_top)
    d1 = np.gradient(phi, grid, edge_order=2)
    d2 = np.gradient(d1, grid, edge_order=2)
    s2 = params.sigma**2
    op = 0.5 * s2 * grid**2 * d2 + (params.a * grid - params.c) * d1 - params.alpha * phi + params.alpha * J
    return (op / params.alpha)[2:-2]


def residual_check(solution: SurvivalSolution, params: ModelParams) -> float:
    """Largest absolute normalised residual of the integro-differential equation."""
    res = integro_residual(solution.grid, solution.phi, params, solution.k_hat, solution.beta)
    return float(np.max(np.abs(res)))


@dataclass(frozen=True)
class ForwardGrowth:
    u: np.ndarray
    deviation: np.ndarray
    rate: float


def forward_growth(solution: SurvivalSolution, params: ModelParams, u_start: float | None = None,
                   u_stop: float | None = None, kick: float = 1e-8) -> ForwardGrowth:
    """Integrate forward from ``u_start`` with a slightly perturbed slope.

    The relative deviation from the backward solution grows like ``e^(u/mu)``
    (the rejected mode); ``rate`` is the fitted exponential rate over the upper
    half of the range.  The start defaults to ``mu``: closer to zero the
    singular point excites a second, even faster growing mode.
    """
    mu = _exponential_mean(params)
    grid, g = solution.grid, solution.g
    u_start = max(grid[0], mu) if u_start is None else float(u_start)
    u_stop = min(grid[-1], 30.0 * mu) if u_stop is None else float(u_stop)
    dg = np.gradient(g, grid, edge_order=2)
    mask = (grid >= u_start) & (grid <= u_stop)
    ts = np.log(grid[mask])
    i0 = int(np.argmax(mask))
    sol = _integrate(params, ts[0], ts[-1], [g[i0], dg[i0] * (1.0 + kick)], ts, 1e-12, 1e-300)
    dev = np.abs(sol.y[0] / g[mask][: sol.y.shape[1]] - 1.0)
    u = grid[mask][: dev.size]
    upper = (u >= 0.5 * (u[0] + u[-1])) & (dev > 0)
    rate = float(np.polyfit(u[upper], np.log(dev[upper]), 1)[0]) if upper.sum() >= 2 else float("nan")
    return ForwardGrowth(u=u, deviation=dev, rate=rate)
