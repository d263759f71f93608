import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypokin import rates
from hypokin.assumptions import HypoParams
from hypokin.errors import RejectedInput
from hypokin.potential import Box, DoubleWell, Quadratic
from oracles import golden_max, sharp_two_lambda


def test_case_a_is_exactly_half():
    rep = rates.decay_rate(HypoParams(1.0, 1.0, -1.0, 0.0), 1.0, 1.0, quadratic=True)
    assert rep.case_tag == "a" and rep.lam == 0.5 and rep.sharp


@pytest.mark.parametrize("a0", [0.10, 0.1875, 0.24])
def test_case_d_matches_spectral_gap(a0):
    cp = rates.poincare_constant_quadratic(1.0, 1.0, a0)
    rep = rates.decay_rate(HypoParams(1.0, 1.0, -a0, 0.0), a0, cp, quadratic=True)
    assert rep.case_tag == "d"
    assert abs(rep.two_lambda - sharp_two_lambda(1.0, a0)) < 1e-12
    assert rates.check_a2_inequality(1.0, 1.0, a0)


def test_case_b_default_epsilon():
    rep = rates.decay_rate(HypoParams(2.0, 1.0, -1.0, 0.0), 1.0, 1.0)
    assert rep.case_tag == "b"
    assert rep.two_lambda == pytest.approx(2.0 - 0.1)
    assert rep.intermediates["a"] == pytest.approx(0.1 ** 2 / 2)
    with pytest.raises(RejectedInput):
        rates.decay_rate(HypoParams(2.0, 1.0, -1.0, 0.0), 1.0, 1.0, epsilon_b=3.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(0.05, 3.0), st.floats(0.0, 0.9), st.floats(0.0, 3.0),
       st.floats(0.05, 2.0))
def test_closed_form_s_is_the_maximizer(nu, a0, tau_frac, c_extra, c_pi):
    """Case c/d rate against a golden-section search on the defining expression."""
    q = nu * nu / 4
    p = HypoParams(nu, 1.0, -q + 0.01 + c_extra, tau_frac * nu)
    try:
        rep = rates.decay_rate(p, a0, c_pi)
    except rates.UncoveredRegion:
        return
    if rep.case_tag not in ("c", "d"):
        return
    i = rep.intermediates
    r = nu - p.tau
    # A and B rebuilt independently
    z = i["a"] + a0
    A = (1 + z + math.sqrt((z - 1) ** 2 + nu ** 2)) / (2 * c_pi)
    B = i["a"] / math.sqrt(z - q)
    assert i["A"] == pytest.approx(A, rel=1e-13) and i["B"] == pytest.approx(B, rel=1e-13)
    f = lambda s: (r - B * (math.sqrt(1 + s * s) - s)) / (1 + A * B * s)
    _, best = golden_max(f, 0.0, 1e4)
    best = max(best, f(0.0))
    assert rep.two_lambda == pytest.approx(best, rel=1e-9, abs=1e-12)
    assert rep.two_lambda <= r + 1e-15


@pytest.mark.parametrize("A,B,r", [(3.0, 0.4, 0.2), (1.8162708793443678, 0.45434411125112145, 1.0),
                                   (2.0, 0.7, 1.0), (0.5, 0.2, 1.0),
                                   # rA within round-off of 2
                                   (100.0, 3.987654559874625, 0.020000000000000018)])
def test_stationarity_of_closed_form(A, B, r):
    s = rates.optimal_s(A, B, r)
    assert abs(rates.stationarity_residual(s, A, B, r)) < 1e-12
    _, best = golden_max(lambda t: rates.big_lambda(t, A, B, r), 0.0, 1e4)
    assert rates.big_lambda(s, A, B, r) == pytest.approx(max(best, rates.big_lambda(0, A, B, r)), rel=1e-10)


def test_uncovered_region():
    # alpha0 < nu^2/4 and c <= -nu^2/4: none of the four regimes applies
    with pytest.raises(rates.UncoveredRegion):
        rates.decay_rate(HypoParams(1.0, 1.0, -0.5, 0.0), 0.1, 1.0)


def test_rate_cap_over_random_inputs():
    rng = np.random.default_rng(11)
    for _ in range(500):
        nu = rng.uniform(0.3, 3)
        p = HypoParams(nu, rng.uniform(0.3, 3), rng.uniform(-2, 5), rng.uniform(0, 0.95) * nu)
        try:
            rep = rates.decay_rate(p, rng.uniform(-1, 4), rng.uniform(0.05, 3))
        except rates.UncoveredRegion:
            continue
        assert 0 < rep.two_lambda <= p.nu - p.tau + 1e-15


def test_a2_sweep():
    for nu in (0.5, 1.0, 2.0, 4.0):
        for a0 in np.linspace(0, nu * nu / 4, 102)[1:-1]:
            assert rates.check_a2_inequality(nu, 1.0, a0)


def test_optimize_rate_quadratic_and_frozen_double_well():
    out = rates.optimize_rate(Quadratic([[1.0]]), Box.of([-3.0], [3.0]), 31, 1.0, 1.0)
    assert out.report.case_tag == "a" and out.report.lam == 0.5
    dw = rates.optimize_rate(DoubleWell(1.0, 1.0), Box.of([-5.0], [5.0]), 201, 1.0, 1.0, c_pi=0.1)
    # frozen from the first verified run
    assert dw.feasible.params.c == pytest.approx(12.0)
    assert dw.feasible.params.tau == pytest.approx(0.6067741935483871)
    assert dw.report.case_tag == "c"
    assert dw.report.lam == pytest.approx(2.512461931067007e-05, rel=1e-9)
    with pytest.raises(RejectedInput):
        rates.optimize_rate(DoubleWell(1.0, 1.0), Box.of([-5.0], [5.0]), 21, 1.0, 1.0)
