import math

import numpy as np
import pytest
from scipy import special as sp

from ruinlab.bounds import (LowerBoundCert, dufresne_quantile_cap, dufresne_tail, lower_bound_exponent,
                            running_max_mgf, running_max_mgf_mc, upper_asymptote_constant)
from ruinlab.errors import BadB, BadCapital, DivergentFunctional, MgfDiverges
from ruinlab.mc import McConfig
from ruinlab.model import ModelParams
from ruinlab.special import gammainc_lower, gammainc_upper

BETA1 = ModelParams(1.0, 1.0, 1.0, 1.0)
BETA2 = ModelParams(1.5, 1.0, 1.0, 1.0)


@pytest.mark.parametrize("s", [0.05, 0.5, 1.0, 2.0, 3.7, 10.0, 40.0])
@pytest.mark.parametrize("x", [0.0, 1e-8, 1e-3, 0.3, 1.0, 2.5, 7.0, 30.0, 120.0])
def test_incomplete_gamma_matches_reference(s, x):
    assert gammainc_lower(s, x) == pytest.approx(sp.gammainc(s, x), abs=1e-12)
    assert gammainc_upper(s, x) == pytest.approx(sp.gammaincc(s, x), abs=1e-12)


def test_incomplete_gamma_closed_forms():
    for x in (0.1, 1.0, 5.0):
        assert gammainc_lower(1.0, x) == pytest.approx(1 - math.exp(-x), abs=1e-14)
        assert gammainc_lower(2.0, x) == pytest.approx(1 - math.exp(-x) * (1 + x), abs=1e-14)
        assert gammainc_lower(0.5, x) == pytest.approx(math.erf(math.sqrt(x)), abs=1e-14)


def test_incomplete_gamma_domain():
    with pytest.raises(ValueError):
        gammainc_lower(0.0, 1.0)
    with pytest.raises(ValueError):
        gammainc_upper(1.0, -1.0)


def test_dufresne_examples():
    assert dufresne_tail(2.0, BETA1) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert dufresne_tail(2.0, BETA2) == pytest.approx(1 - 2 * math.exp(-1), abs=1e-12)
    far = dufresne_tail(2000.0, BETA2)
    assert abs(far / 5e-7 - 1) < 1e-3


def test_dufresne_monotone():
    us = np.geomspace(0.1, 1000, 60)
    vals = [dufresne_tail(u, BETA1) for u in us]
    assert all(0 < v < 1 for v in vals)
    assert all(x > y for x, y in zip(vals, vals[1:]))
    cs = [0.2, 0.5, 1.0, 2.0, 4.0]
    by_c = [dufresne_tail(3.0, ModelParams(1.0, 1.0, c, 1.0)) for c in cs]
    assert all(x < y for x, y in zip(by_c, by_c[1:]))


def test_dufresne_errors():
    with pytest.raises(DivergentFunctional):
        dufresne_tail(1.0, ModelParams(0.5, 1.0, 1.0, 1.0))
    with pytest.raises(BadCapital):
        dufresne_tail(0.0, BETA1)


def test_upper_constant_examples():
    assert upper_asymptote_constant(BETA1) == pytest.approx(2.0, rel=1e-14)
    assert upper_asymptote_constant(BETA2) == pytest.approx(2.0, rel=1e-14)
    assert upper_asymptote_constant(ModelParams(1.5, 1.0, 2.0, 1.0)) == pytest.approx(8.0, rel=1e-14)
    with pytest.raises(DivergentFunctional):
        upper_asymptote_constant(ModelParams(0.0, 1.0, 1.0, 1.0))


def test_upper_constant_is_tail_asymptote():
    # u^beta P(R > u) -> C, since P(beta, x) ~ x^beta / Gamma(beta + 1)
    for p in (BETA1, BETA2, ModelParams(0.8, 0.9, 1.3, 1.0)):
        u = 1e7
        assert u**p.beta * dufresne_tail(u, p) == pytest.approx(upper_asymptote_constant(p), rel=1e-5)


def test_quantile_cap():
    cap = dufresne_quantile_cap(BETA1, 1e-6)
    assert dufresne_tail(cap, BETA1) <= 1e-6
    assert dufresne_tail(cap * 0.999, BETA1) > 1e-6


def test_certificate_threshold():
    with pytest.raises(BadB):
        lower_bound_exponent(BETA1, rho=0.5, B=8.0, cfg=McConfig(n_paths=10))
    with pytest.raises(BadB):
        lower_bound_exponent(BETA1, rho=1.0, B=100.0, cfg=McConfig(n_paths=10))


def test_certificate_fields():
    cert = lower_bound_exponent(BETA1, rho=0.5, B=9.0, cfg=McConfig(n_paths=20_000))
    assert isinstance(cert, LowerBoundCert)
    assert cert.B1 == pytest.approx(1.0, abs=1e-12)
    assert 0 < cert.p_gamma <= 1 and 0 < cert.p_d <= 1
    assert cert.p_gamma == cert.n_gamma / cert.n_samples
    assert cert.beta_star > math.log(cert.p_gamma) / math.log(0.5)
    assert cert.beta_star == pytest.approx(math.log(cert.p_gamma) / math.log(0.5), rel=2e-6)
    assert math.log(0.25) / math.log(0.5) == pytest.approx(2.0)


def test_certificate_deterministic():
    cfg = McConfig(n_paths=5000, master_seed=17)
    assert lower_bound_exponent(BETA1, cfg=cfg) == lower_bound_exponent(BETA1, cfg=cfg)


def test_mgf_examples():
    assert running_max_mgf(0.0, 0.3, 1.0) == 1.0
    assert running_max_mgf(1.0, 0.0, 2.0) == pytest.approx(2.0, rel=1e-14)


def test_mgf_diverges():
    with pytest.raises(MgfDiverges):
        running_max_mgf(2.0, 0.0, 2.0)
    with pytest.raises(MgfDiverges):
        running_max_mgf(0.5, 0.0, 0.0)
    crit = math.sqrt(2 * 2.0 + 0.25) - 0.5
    qs = crit * (1 - np.geomspace(1e-1, 1e-9, 30))
    vals = [running_max_mgf(q, 0.5, 2.0) for q in qs]
    assert all(x < y for x, y in zip(vals, vals[1:]))
    assert vals[-1] > 1e8


def test_mgf_monte_carlo_small():
    mean, se = running_max_mgf_mc(1.0, 0.0, 2.0, n_paths=20_000, dt=1e-3, seed=3)
    assert abs(mean - 2.0) < 0.05 + 3 * se
    assert running_max_mgf_mc(1.0, 0.0, 2.0, n_paths=500, dt=1e-3, seed=3) == \
        running_max_mgf_mc(1.0, 0.0, 2.0, n_paths=500, dt=1e-3, seed=3)
