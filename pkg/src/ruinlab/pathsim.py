"""Continuous-time simulation of the reserve process and the discounted payout."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import BadGrid, ImmediateRuin
from .model import ModelParams
from .rng import RngStream


@dataclass(frozen=True)
class SimGrid:
    """Time discretisation.

    ``dt`` is the quadrature step, ``horizon`` the truncation time.
    ``refine_factor`` sub-divides the step that contains a ruin crossing to
    locate the ruin time.  ``bisections`` splits every step into
    ``2**bisections`` Brownian-bridge sub-steps drawn from auxiliary lanes, so
    grids that differ only in ``bisections`` share their noise.
    """

    dt: float = 1e-3
    horizon: float = 400.0
    refine_factor: int = 8
    bisections: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise BadGrid(f"dt must be positive and finite, got {self.dt!r}")
        if not self.horizon > 0:
            raise BadGrid(f"horizon must be positive, got {self.horizon!r}")
        if self.dt > self.horizon:
            raise BadGrid(f"dt={self.dt} exceeds horizon={self.horizon}")
        if int(self.refine_factor) != self.refine_factor or self.refine_factor < 1:
            raise BadGrid(f"refine_factor must be an integer >= 1, got {self.refine_factor!r}")
        if int(self.bisections) != self.bisections or not 0 <= self.bisections <= 16:
            raise BadGrid(f"bisections must be an integer in [0, 16], got {self.bisections!r}")

    @property
    def effective_dt(self) -> float:
        return self.dt / 2**self.bisections


@dataclass(frozen=True)
class PathResult:
    ruined: bool
    ruin_time: float | None
    terminal_value: float
    n_jumps: int
    capped: bool = False
    jump_times: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False, compare=False)
    jump_values: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False, compare=False)


def kernel_params(params: ModelParams):
    kind, mu, table = params.claims.kernel_spec()
    return (params.a, params.sigma, params.c, params.alpha, kind, mu, np.ascontiguousarray(table, dtype=float))


def simulate_path(u: float, params: ModelParams, grid: SimGrid, stream: RngStream,
                  cap: float = math.inf, record: bool = True) -> PathResult:
    """Simulate one reserve path from capital ``u`` until ruin or ``grid.horizon``.

    Between releases the exact solution is used with log-normal increments and
    trapezoidal quadrature of the discount integral.  ``ruin_time`` is the first
    node of the refined grid at which the reserve is non-positive.  A path whose
    reserve reaches ``cap`` after a release is stopped and reported as
    surviving (``capped=True``).  The stream is advanced past the draws used.

    With ``record=True`` the release times and the post-release reserve are
    returned in ``jump_times`` / ``jump_values``.
    """
    if not isinstance(grid, SimGrid):
        raise BadGrid("grid must be a SimGrid")
    if not u > 0:
        result = PathResult(True, 0.0, float(u), 0)
        raise ImmediateRuin(f"initial capital {u} is not positive", result)
    us = np.array([float(u)])
    rt = np.empty(1)
    st = np.empty(1, dtype=np.int8)
    tv = np.empty(1)
    capacity = 0
    if record:
        expected = params.alpha * grid.horizon
        capacity = int(expected + 10 * math.sqrt(expected + 1) + 16)
    while True:
        rec_t = np.empty(capacity)
        rec_x = np.empty(capacity)
        uctr, nctr, n_jumps, n_rec = K.run_path(
            us, stream.ukey, stream.nkey, stream.uctr, stream.nctr, *kernel_params(params),
            grid.dt, grid.horizon, int(grid.refine_factor), int(grid.bisections), float(cap),
            rt, st, tv, rec_t, rec_x)
        if not record or n_rec < capacity or n_rec == n_jumps:
            break
        capacity *= 4
    stream.uctr, stream.nctr = int(uctr), int(nctr)
    ruined = st[0] == K.STATUS_RUINED
    return PathResult(
        ruined=bool(ruined),
        ruin_time=float(rt[0]) if ruined else None,
        terminal_value=float(tv[0]),
        n_jumps=int(n_jumps),
        capped=bool(st[0] == K.STATUS_CAPPED),
        jump_times=rec_t[:n_rec].copy(),
        jump_values=rec_x[:n_rec].copy(),
    )


def simulate_R(params: ModelParams, grid: SimGrid, stream: RngStream) -> float:
    """Trapezoidal value of ``c * int_0^horizon exp(-eta_v) dv`` along one log-price path."""
    if not isinstance(grid, SimGrid):
        raise BadGrid("grid must be a SimGrid")
    value, nctr = K.payout_functional(stream.nkey, stream.nctr, params.kappa, params.sigma, params.c,
                                      grid.dt, grid.horizon, int(grid.bisections), math.inf)
    stream.nctr = int(nctr)
    return float(value)
