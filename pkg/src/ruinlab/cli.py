"""Command-line front end.

Configuration is a flat ``key = value`` file (``#`` starts a comment).  Keys:

=================  ===========================================  =========
key                meaning                                      default
=================  ===========================================  =========
a, sigma, c        model drift, volatility, payout rate         required
alpha              release intensity                            required
claims.kind        ``exponential``                              exponential
claims.mu          mean release size                            required
dt, horizon        time step and truncation time                1e-3, 400
refine_factor      ruin-time refinement                         8
bisections         bridge levels per step                       0
n_paths, seed      path count and master seed                   100000, 0
cap_tol            survivor-cap tolerance                       1e-6
u, u_list          capital(s)                                   1.0
horizons           horizon list for truncation diagnostics      (none)
rho, B             lower-bound certificate parameters           0.5, 9
n_steps            chain length                                 50
command            subcommand when none is given on the line    ruin
out, format        output path and csv|json                     stdout, csv
=================  ===========================================  =========

Command-line flags override the file; without ``--config`` the model
defaults to ``a = sigma = c = alpha = mu = 1``.  Exit status is 0 on
success, 1 on a numerical failure and 2 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis, bounds, chain, mc, model, ode
from .errors import (BadB, BadCapital, BadFormat, BadGrid, BadInput, BadUniform, ConfigError,
                     DegenerateVolatility, InvalidParameters, RuinLabError)
from .pathsim import SimGrid

COMMANDS = ("ruin", "sweep", "bound", "ode", "chain", "ergodic", "fit", "share")


def _floats(text: str) -> tuple[float, ...]:
    parts = [p for p in str(text).replace(" ", "").split(",") if p]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(p) for p in parts)


KEYS = {
    "command": str, "a": float, "sigma": float, "c": float, "alpha": float,
    "claims.kind": str, "claims.mu": float,
    "dt": float, "horizon": float, "refine_factor": int, "bisections": int,
    "n_paths": int, "seed": int, "cap_tol": float,
    "u": float, "u_list": _floats, "horizons": _floats,
    "rho": float, "B": float, "n_steps": int, "out": str, "format": str,
}
REQUIRED = ("a", "sigma", "c", "alpha", "claims.mu")
MODEL_DEFAULTS = {"a": 1.0, "sigma": 1.0, "c": 1.0, "alpha": 1.0, "claims.mu": 1.0}
DEFAULTS = {
    "command": "ruin", "claims.kind": "exponential", "dt": 1e-3, "horizon": 400.0, "refine_factor": 8,
    "bisections": 0, "n_paths": 100_000, "seed": 0, "cap_tol": 1e-6, "rho": 0.5, "B": 9.0,
    "n_steps": 50, "format": "csv",
}


@dataclass(frozen=True)
class RunSpec:
    command: str
    params: model.ModelParams
    mc: mc.McConfig
    u_list: tuple[float, ...] = (1.0,)
    out: str | None = None
    format: str = "csv"
    options: dict = field(default_factory=dict)


def _parse_lines(text) -> dict:
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(f"config is not UTF-8: {exc}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r} on line {lineno}", key=key)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} on line {lineno}", key=key)
        try:
            values[key] = KEYS[key](value)
        except ValueError:
            raise ConfigError(f"bad value {value!r} for key {key!r}", key=key) from None
    return values


def build_spec(values: dict, options: dict | None = None) -> RunSpec:
    """Validate merged key/value settings into a :class:`RunSpec`."""
    v = {**DEFAULTS, **values}
    for key in REQUIRED:
        if key not in v:
            raise ConfigError(f"missing required key {key!r}", key=key)
    if v["command"] not in COMMANDS:
        raise ConfigError(f"unknown command {v['command']!r}", key="command")
    if v["claims.kind"] != "exponential":
        raise ConfigError(f"unsupported claims.kind {v['claims.kind']!r}", key="claims.kind")
    for key in ("sigma", "c", "alpha"):
        if not v[key] >= 0:
            raise ConfigError(f"{key} must be >= 0, got {v[key]}", key=key)
    for key in ("a", "sigma", "c", "alpha", "claims.mu", "dt", "horizon"):
        if not math.isfinite(v[key]):
            raise ConfigError(f"{key} must be finite", key=key)
    if not v["claims.mu"] > 0:
        raise ConfigError(f"claims.mu must be positive, got {v['claims.mu']}", key="claims.mu")
    if v["format"] not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {v['format']!r}", key="format")
    try:
        params = model.ModelParams(v["a"], v["sigma"], v["c"], v["alpha"],
                                   model.ExponentialClaims(v["claims.mu"]))
        grid = SimGrid(dt=v["dt"], horizon=v["horizon"], refine_factor=v["refine_factor"],
                       bisections=v["bisections"])
        cfg = mc.McConfig(n_paths=v["n_paths"], grid=grid, master_seed=v["seed"], cap_tol=v["cap_tol"])
    except (InvalidParameters, BadGrid, BadInput) as exc:
        raise ConfigError(str(exc)) from None
    if "u_list" in v:
        u_list = tuple(v["u_list"])
    elif "u" in v:
        u_list = (v["u"],)
    else:
        u_list = {"sweep": (5.0, 10.0, 20.0, 40.0), "ode": (1.0, 2.0, 5.0, 10.0),
                  "bound": (1.0, 2.0, 5.0, 10.0)}.get(v["command"], (1.0,))
    opts = {"rho": v["rho"], "B": v["B"], "n_steps": v["n_steps"], "horizons": v.get("horizons")}
    opts.update(options or {})
    return RunSpec(command=v["command"], params=params, mc=cfg, u_list=u_list, out=v.get("out"),
                   format=v["format"], options=opts)


def parse_config(text) -> RunSpec:
    """Parse a configuration document into a validated :class:`RunSpec`."""
    return build_spec(_parse_lines(text))


# -- commands ---------------------------------------------------------------

def _cmd_ruin(spec):
    horizons = spec.options.get("horizons")
    if horizons:
        rows = []
        for u in spec.u_list:
            rows.extend(mc.horizon_curve(u, spec.params, spec.mc, horizons))
        return rows, None
    rows = mc.estimate_ruin_curve(spec.u_list, spec.params, spec.mc)
    return (rows[0] if len(rows) == 1 else rows), None


def _cmd_sweep(spec):
    rows = mc.estimate_ruin_curve(spec.u_list, spec.params, spec.mc)
    note = None
    try:
        fit = analysis.fit_estimates(rows)
        note = (f"fit: k_hat={fit.k_hat:.6g} beta_hat={fit.beta_hat:.6g} +- {fit.stderr_beta:.2g} "
                f"(points used {fit.points_used}, dropped {fit.points_dropped})")
    except RuinLabError as exc:
        note = f"fit skipped: {type(exc).__name__}: {exc}"
    return rows, note


def _cmd_bound(spec):
    p = spec.params
    opts = spec.options
    if opts.get("mgf"):
        q, drift, rate = opts.get("q", 1.0), opts.get("drift", 0.0), opts.get("rate", 2.0)
        exact = bounds.running_max_mgf(q, drift, rate)
        mean, se = bounds.running_max_mgf_mc(q, drift, rate, spec.mc.n_paths, spec.mc.grid.dt,
                                             spec.mc.master_seed)
        return {"q": q, "drift": drift, "rate": rate, "exact": exact, "mc_mean": mean, "mc_stderr": se,
                "n_paths": spec.mc.n_paths, "dt": spec.mc.grid.dt}, None
    const = bounds.upper_asymptote_constant(p)
    tails = None
    if opts.get("tail_mc"):
        tails = mc.estimate_tail_R_curve(spec.u_list, p, spec.mc)
    rows = []
    for i, u in enumerate(spec.u_list):
        row = {"u": u, "dufresne_tail": bounds.dufresne_tail(u, p), "upper_constant": const,
               "upper_bound": const * u ** (-p.beta)}
        if tails is not None:
            row.update(mc_tail=tails[i].p_hat, mc_stderr=tails[i].stderr, n_paths=tails[i].n_paths)
        rows.append(row)
    note = None
    if not opts.get("no_cert"):
        cert = bounds.lower_bound_exponent(p, opts["rho"], opts["B"], spec.mc)
        note = (f"lower bound: rho={cert.rho:g} B={cert.B:g} B1={cert.B1:g} p_gamma={cert.p_gamma:.6g} "
                f"p_d={cert.p_d:.6g} beta_star={cert.beta_star:.10g}")
    return rows, note


def _cmd_ode(spec):
    sol = ode.solve_survival(spec.params)
    residual = ode.residual_check(sol, spec.params)
    us = np.array(spec.u_list, dtype=float)
    psi = sol.ruin_probability(us)
    est = mc.estimate_ruin_curve(us, spec.params, spec.mc) if spec.options.get("mc") else None
    rows = []
    for i, u in enumerate(us):
        row = {"u": float(u), "psi_ode": float(psi[i]), "phi_ode": float(1 - psi[i]), "k_hat": sol.k_hat,
               "residual": residual}
        if est is not None:
            row.update(psi_mc=est[i].p_hat, mc_stderr=est[i].stderr, n_paths=est[i].n_paths)
        rows.append(row)
    return rows, f"k_hat={sol.k_hat:.10g} residual={residual:.3g} c2={sol.c2:.10g}"


def _cmd_chain(spec):
    from .rng import RngStream

    n = int(spec.options["n_steps"])
    u = spec.u_list[0]
    if spec.options.get("gap"):
        gaps = chain.coupled_chain_gap(u, spec.params, spec.mc.n_paths, n, spec.mc.grid,
                                       reference_bisections=spec.mc.grid.bisections + 6,
                                       chain_bisections=[spec.mc.grid.bisections, spec.mc.grid.bisections + 1],
                                       seed=spec.mc.master_seed)
        mx = gaps.max(axis=0)
        return {"u": u, "n_paths": spec.mc.n_paths, "n_steps": n, "dt": spec.mc.grid.effective_dt,
                "max_gap": float(mx[0]), "max_gap_half_dt": float(mx[1]),
                "ratio": float(mx[0] / mx[1]) if mx[1] > 0 else math.inf}, None
    path = chain.simulate_chain(u, spec.params, n, spec.mc.grid, RngStream(spec.mc.master_seed, 0))
    rows = [{"k": k + 1, "T": s.T, "xi": s.xi, "M": s.M, "Q": s.Q, "Y": s.Y} for k, s in enumerate(path.steps)]
    first = path.first_ruin()
    return rows, f"first k with Y_k <= 0: {first if first is not None else 'none'}"


def _cmd_ergodic(spec):
    from .rng import RngStream

    sampler = chain.InsuranceCoefficients(spec.params, spec.mc.grid)
    N = spec.mc.n_paths
    f = chain.ruin_indicator_test_function
    avg = chain.ergodic_average(f, 0.0, sampler, N, RngStream(spec.mc.master_seed, 1))
    zeta = chain.stationary_samples(sampler, N, RngStream(spec.mc.master_seed, 2)).samples
    occ = chain.chain_occupancy(sampler, 0.0, N, RngStream(spec.mc.master_seed, 3), burn_in=1000)
    from scipy.stats import ks_2samp

    ks = float(ks_2samp(occ, zeta).statistic)
    zmean = float(np.mean(f(zeta)))
    return {"N": N, "ergodic_average": avg, "zeta_mean_f": zmean, "difference": abs(avg - zmean),
            "ks_distance": ks}, None


def _cmd_fit(spec):
    path = spec.options.get("input")
    data = sys.stdin.buffer.read() if path in (None, "-") else open(path, "rb").read()
    fit = analysis.fit_estimates(analysis.parse_ruin_csv(data))
    return fit, None


def _cmd_share(spec):
    share = model.max_risky_share(spec.params.a, spec.params.sigma)
    return {"a": spec.params.a, "sigma": spec.params.sigma, "max_risky_share": share}, None


HANDLERS = {"ruin": _cmd_ruin, "sweep": _cmd_sweep, "bound": _cmd_bound, "ode": _cmd_ode,
            "chain": _cmd_chain, "ergodic": _cmd_ergodic, "fit": _cmd_fit, "share": _cmd_share}

USAGE_ERRORS = (ConfigError, BadFormat, BadInput, BadGrid, BadCapital, BadUniform, BadB,
                InvalidParameters, DegenerateVolatility, OSError)


def run(spec: RunSpec) -> int:
    """Execute ``spec``; returns the process exit code."""
    try:
        result, note = HANDLERS[spec.command](spec)
        payload = analysis.emit_report(result, spec.format)
    except USAGE_ERRORS as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except RuinLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if note:
        print(note, file=sys.stderr)
    if spec.out:
        try:
            with open(spec.out, "wb") as fh:
                fh.write(payload)
        except OSError as exc:
            print(f"cannot write {spec.out}: {exc}", file=sys.stderr)
            return 2
    else:
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ruinlab", description="Ruin probabilities for an annuity reserve invested in a risky asset.")
    parser.add_argument("command", nargs="?", choices=COMMANDS)
    parser.add_argument("input", nargs="?", help="CSV file for 'fit' (default stdin)")
    parser.add_argument("--config", metavar="PATH")
    parser.add_argument("--u", type=float)
    parser.add_argument("--u-list", type=_floats, metavar="F,F,...")
    parser.add_argument("--paths", type=int)
    parser.add_argument("--horizon", type=float)
    parser.add_argument("--dt", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", metavar="PATH")
    parser.add_argument("--format", choices=("csv", "json"))
    model_args = parser.add_argument_group("model")
    for name in ("a", "sigma", "c", "alpha", "mu"):
        model_args.add_argument(f"--{name}", type=float)
    extra = parser.add_argument_group("command options")
    extra.add_argument("--horizons", type=_floats, metavar="F,F,...", help="ruin: truncation diagnostic")
    extra.add_argument("--bisections", type=int)
    extra.add_argument("--rho", type=float)
    extra.add_argument("--B", type=float)
    extra.add_argument("--steps", type=int, help="chain: number of releases")
    extra.add_argument("--tail-mc", action="store_true", help="bound: add Monte Carlo payout tails")
    extra.add_argument("--no-cert", action="store_true", help="bound: skip the lower-bound certificate")
    extra.add_argument("--mgf", action="store_true", help="bound: running-maximum MGF check")
    extra.add_argument("--q", type=float, default=1.0)
    extra.add_argument("--drift", type=float, default=0.0)
    extra.add_argument("--rate", type=float, default=2.0)
    extra.add_argument("--mc", action="store_true", help="ode: compare with Monte Carlo")
    extra.add_argument("--gap", action="store_true", help="chain: coupled quadrature gap")
    return parser


def spec_from_args(args) -> RunSpec:
    values = {}
    if args.config:
        with open(args.config, "rb") as fh:
            values = _parse_lines(fh.read())
    else:
        values = dict(MODEL_DEFAULTS)
    overrides = {"command": args.command, "u": args.u, "u_list": args.u_list, "n_paths": args.paths,
                 "horizon": args.horizon, "dt": args.dt, "seed": args.seed, "out": args.out,
                 "format": args.format, "a": args.a, "sigma": args.sigma, "c": args.c, "alpha": args.alpha,
                 "claims.mu": args.mu, "horizons": args.horizons, "bisections": args.bisections,
                 "rho": args.rho, "B": args.B, "n_steps": args.steps}
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    if args.u is not None and args.u_list is None:
        values.pop("u_list", None)
    if args.command == "fit" or args.input is not None:
        if args.command != "fit":
            raise ConfigError("a positional input file is only accepted by 'fit'")
    options = {"tail_mc": args.tail_mc, "no_cert": args.no_cert, "mgf": args.mgf, "q": args.q,
               "drift": args.drift, "rate": args.rate, "mc": args.mc, "gap": args.gap, "input": args.input}
    return build_spec(values, options)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    try:
        spec = spec_from_args(args)
    except (ConfigError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    mc.apply_thread_limit()
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
