"""Power-law tail fits and report serialisation."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from .errors import BadFormat, BadInput, InsufficientData
from .mc import RuinEstimate, wilson_interval, Z95

RUIN_COLUMNS = ("u", "n_paths", "n_ruined", "p_hat", "ci_low", "ci_high", "horizon", "seed")


@dataclass(frozen=True)
class TailFit:
    """Fitted ``Psi(u) ~ k_hat u^(-beta_hat)``."""

    k_hat: float
    beta_hat: float
    stderr_beta: float
    points_used: int
    residual_rms: float
    points_dropped: int = 0


def _wls(x, y, w, scale_by_residuals):
    X = np.column_stack([np.ones_like(x), x])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    coef = cov @ (XtW @ y)
    resid = y - X @ coef
    if scale_by_residuals:
        dof = x.size - 2
        cov = cov * (float(np.sum(w * resid**2)) / dof if dof > 0 else 0.0)
    return coef, cov, resid


class PowerLawTailRegressor(RegressorMixin, BaseEstimator):
    """Weighted least squares of ``ln y`` on ``ln u``.

    ``sample_weight`` should be the inverse variances of ``ln y``; by the delta
    method these are ``(p_hat / stderr)^2``.  Without weights the slope
    uncertainty is scaled by the residual variance instead.
    """

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, ensure_min_samples=2, y_numeric=True)
        if X.shape[1] != 1:
            raise BadInput("X must have a single column of capitals")
        u = X[:, 0]
        if np.any(u <= 0) or np.any(y <= 0):
            raise BadInput("capitals and probabilities must be positive")
        weighted = sample_weight is not None
        w = np.ones_like(u) if not weighted else np.asarray(sample_weight, dtype=float)
        coef, cov, resid = _wls(np.log(u), np.log(y), w, scale_by_residuals=not weighted)
        self.intercept_ = float(coef[0])
        self.slope_ = float(coef[1])
        self.k_ = math.exp(self.intercept_)
        self.beta_ = -self.slope_
        self.stderr_beta_ = float(math.sqrt(max(cov[1, 1], 0.0)))
        self.residual_rms_ = float(math.sqrt(np.mean(resid**2)))
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "k_")
        X = check_array(X)
        return self.k_ * X[:, 0] ** (-self.beta_)


def fit_power_law(points) -> TailFit:
    """Fit ``(u, p_hat, stderr)`` triples; zero estimates are dropped and counted."""
    rows = [tuple(float(v) for v in p) for p in points]
    if any(len(r) != 3 for r in rows):
        raise BadInput("each point must be (u, p_hat, stderr)")
    u_all = np.array([r[0] for r in rows])
    if u_all.size > 1 and np.any(np.diff(u_all) <= 0):
        raise BadInput("u must be strictly increasing")
    used = [r for r in rows if r[1] > 0]
    dropped = len(rows) - len(used)
    if len(used) < 2:
        raise InsufficientData(f"need at least 2 points with p_hat > 0, got {len(used)}")
    u = np.array([r[0] for r in used])
    p = np.array([r[1] for r in used])
    se = np.array([r[2] for r in used])
    weights = (p / se) ** 2 if np.all(se > 0) else None
    model = PowerLawTailRegressor().fit(u[:, None], p, sample_weight=weights)
    return TailFit(k_hat=model.k_, beta_hat=model.beta_, stderr_beta=model.stderr_beta_,
                   points_used=len(used), residual_rms=model.residual_rms_, points_dropped=dropped)


def fit_estimates(estimates) -> TailFit:
    """Power-law fit of a list of :class:`RuinEstimate`, ordered by ``u``."""
    ests = sorted(estimates, key=lambda e: e.u)
    return fit_power_law([(e.u, e.p_hat, e.stderr) for e in ests])


def _number(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    x = float(value)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _json(obj) -> str:
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_json(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, list):
        return "[" + ", ".join(_json(v) for v in obj) + "]"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if callable(obj):
        return json.dumps(getattr(obj, "__name__", repr(obj)))
    return _number(obj)


def _records(run):
    if isinstance(run, (list, tuple)):
        return [_plain(r) for r in run], all(isinstance(r, RuinEstimate) for r in run)
    return [_plain(run)], isinstance(run, RuinEstimate)


def emit_report(run, format: str = "csv") -> bytes:
    """Serialise a result record or a list of records.

    CSV rows of :class:`RuinEstimate` follow the fixed column contract; other
    records use their scalar fields as columns.  JSON mirrors all field names.
    Floats carry 17 significant digits, so parsing recovers them exactly.
    """
    fmt = str(format).lower()
    if fmt not in ("csv", "json"):
        raise BadFormat(f"unsupported format {format!r}; use csv or json")
    rows, ruin_rows = _records(run)
    if fmt == "json":
        body = _json(rows if isinstance(run, (list, tuple)) else rows[0])
        return (body + "\n").encode("utf-8")
    if ruin_rows:
        columns = list(RUIN_COLUMNS)
    else:
        columns = [k for k, v in rows[0].items() if not isinstance(v, (list, dict))] if rows else []
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_cell(row.get(c)) for c in columns))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value if not any(ch in value for ch in ',"\n') else '"' + value.replace('"', '""') + '"'
    return _number(value)


def parse_ruin_csv(data: bytes) -> list[RuinEstimate]:
    """Read a ruin-sweep CSV back into estimates (Wilson statistics recomputed)."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else str(data)
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != RUIN_COLUMNS:
        raise BadFormat(f"expected header {','.join(RUIN_COLUMNS)}")
    out = []
    for row in reader:
        n_paths = int(row["n_paths"])
        n_ruined = int(row["n_ruined"])
        low, high = wilson_interval(n_ruined, n_paths)
        out.append(RuinEstimate(u=float(row["u"]), n_paths=n_paths, n_ruined=n_ruined,
                                p_hat=float(row["p_hat"]), ci_low=float(row["ci_low"]),
                                ci_high=float(row["ci_high"]), horizon=float(row["horizon"]),
                                seed=int(row["seed"]), stderr=(high - low) / (2 * Z95)))
    return out
