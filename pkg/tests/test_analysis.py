import json
import math

import numpy as np
import pytest

from ruinlab.analysis import (RUIN_COLUMNS, PowerLawTailRegressor, TailFit, emit_report, fit_estimates,
                              fit_power_law, parse_ruin_csv)
from ruinlab.errors import BadFormat, BadInput, InsufficientData
from ruinlab.mc import McConfig, RuinEstimate, estimate_ruin_curve
from ruinlab.model import ModelParams
from ruinlab.pathsim import SimGrid

US = [2.0, 4.0, 8.0, 16.0]


def _exact(k, beta, us=US, rel_se=0.01):
    return [(u, k * u**-beta, rel_se * k * u**-beta) for u in us]


def test_exact_fit():
    fit = fit_power_law(_exact(2.0, 1.0))
    assert isinstance(fit, TailFit)
    assert fit.k_hat == pytest.approx(2.0, rel=1e-12)
    assert fit.beta_hat == pytest.approx(1.0, rel=1e-12)
    assert fit.points_used == 4 and fit.points_dropped == 0
    assert fit.residual_rms < 1e-12


def test_rescaling_capital():
    s, beta = 3.0, 1.7
    base = fit_power_law(_exact(0.8, beta))
    # p(u) = k u^-beta = (k s^beta) (s u)^-beta
    scaled = fit_power_law([(s * u, p, e) for u, p, e in _exact(0.8, beta)])
    assert scaled.beta_hat == pytest.approx(base.beta_hat, rel=1e-12)
    assert scaled.k_hat == pytest.approx(base.k_hat * s**beta, rel=1e-11)


def test_equivariant_in_probability_scale():
    pts = [(u, p * (1 + 0.05 * (-1) ** i), e) for i, (u, p, e) in enumerate(_exact(1.3, 0.9))]
    base = fit_power_law(pts)
    lam = 0.37
    scaled = fit_power_law([(u, lam * p, lam * e) for u, p, e in pts])
    assert scaled.beta_hat == pytest.approx(base.beta_hat, rel=1e-12)
    assert scaled.k_hat == pytest.approx(lam * base.k_hat, rel=1e-12)


def test_insufficient_and_dropped():
    with pytest.raises(InsufficientData):
        fit_power_law([(1.0, 0.5, 0.01)])
    with pytest.raises(InsufficientData):
        fit_power_law([(1.0, 0.5, 0.01), (2.0, 0.0, 0.0)])
    fit = fit_power_law(_exact(2.0, 1.0) + [(32.0, 0.0, 0.0)])
    assert fit.points_dropped == 1 and fit.points_used == 4


def test_unsorted_rejected():
    with pytest.raises(BadInput):
        fit_power_law([(4.0, 0.5, 0.01), (2.0, 0.6, 0.01)])


def test_weights_matter():
    pts = [(1.0, 1.0, 1e-4), (2.0, 0.5, 1e-4), (4.0, 0.4, 0.2)]
    fit = fit_power_law(pts)
    assert fit.beta_hat == pytest.approx(1.0, abs=1e-3)
    assert fit.stderr_beta > 0


def test_regressor_api():
    X = np.array(US)[:, None]
    model = PowerLawTailRegressor().fit(X, 2.0 / X[:, 0])
    np.testing.assert_allclose(model.predict(np.array([[10.0]])), [0.2], rtol=1e-12)
    assert model.score(X, 2.0 / X[:, 0]) == pytest.approx(1.0)


def _estimates():
    cfg = McConfig(n_paths=400, grid=SimGrid(dt=1e-2, horizon=20.0), master_seed=4)
    return estimate_ruin_curve([0.5, 1.0, 2.0], ModelParams(1.0, 1.0, 1.0, 1.0), cfg)


def test_fit_estimates_runs():
    fit = fit_estimates(_estimates())
    assert fit.k_hat > 0 and fit.points_used == 3


def test_csv_contract():
    ests = _estimates()
    data = emit_report(ests, "csv")
    lines = data.decode("utf-8").split("\n")
    assert b"\r" not in data and lines[-1] == ""
    assert lines[0] == ",".join(RUIN_COLUMNS)
    assert all(len(line.split(",")) == 8 for line in lines[1:-1])
    assert len(lines) == 2 + len(ests)


def test_csv_empty():
    assert emit_report([], "csv") == (",".join(RUIN_COLUMNS) + "\n").encode()


def test_csv_round_trip():
    ests = _estimates()
    back = parse_ruin_csv(emit_report(ests, "csv"))
    for a, b in zip(ests, back):
        for name in RUIN_COLUMNS:
            assert getattr(a, name) == getattr(b, name)
        assert a.stderr == pytest.approx(b.stderr, rel=1e-15)


def test_json_round_trip():
    ests = _estimates()
    rows = json.loads(emit_report(ests, "json"))
    assert len(rows) == len(ests)
    for est, row in zip(ests, rows):
        for name, value in row.items():
            ref = getattr(est, name)
            assert value == ref or (math.isinf(ref) and math.isinf(value))
    one = json.loads(emit_report(ests[0], "json"))
    assert one["u"] == ests[0].u


def test_report_deterministic():
    assert emit_report(_estimates(), "csv") == emit_report(_estimates(), "csv")


def test_bad_format():
    with pytest.raises(BadFormat):
        emit_report([], "xml")
    with pytest.raises(BadFormat):
        parse_ruin_csv(b"a,b\n1,2\n")


def test_generic_record_csv():
    fit = fit_power_law(_exact(2.0, 1.0))
    text = emit_report(fit, "csv").decode()
    header, row, _ = text.split("\n")
    assert header.split(",")[:2] == ["k_hat", "beta_hat"]
    assert float(row.split(",")[0]) == fit.k_hat
