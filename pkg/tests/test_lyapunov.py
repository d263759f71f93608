import numpy as np
import pytest

from hypokin import lyapunov as ly
from hypokin import rates
from hypokin.assumptions import HypoParams
from hypokin.potential import Box, DoubleWell, Quadratic
from oracles import random_spd


def test_q_spectrum_matches_numeric():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n, nu = 3, rng.uniform(0.3, 3)
        H = random_spd(rng, n)
        betas, mu, stable = ly.q_spectrum(np.linalg.eigvalsh(H), nu)
        num = np.linalg.eigvals(ly.q_matrix(H, nu))
        key = lambda z: sorted(z, key=lambda w: (round(w.real, 8), round(w.imag, 8)))
        np.testing.assert_allclose(key(np.array(betas)), key(num), atol=1e-9)
        assert stable and mu == pytest.approx(min(num.real))


def test_p_eigenvalues_closed_form():
    for al, a, nu in [(1.0, 0.0, 1.0), (0.2, 0.3, 1.2), (5.0, 1.0, 0.5)]:
        lo, hi = ly.p_eigenvalues(al, a, nu)
        num = np.linalg.eigvalsh(ly.p_matrix([[al]], nu, a))
        np.testing.assert_allclose([lo, hi], num, atol=1e-12)


def test_delta_residual_zero():
    rng = np.random.default_rng(5)
    for _ in range(200):
        nu, sigma = rng.uniform(0.3, 3), rng.uniform(0.3, 3)
        a0 = rng.uniform(0.01, 3)
        a = nu * nu / 4 - a0 + rng.uniform(0.01, 3)
        if a < 0:
            continue
        g = rng.uniform(0, 10)
        d = ly.delta_of(a, g, nu, sigma, a0)
        scale = max(1.0, a * a)
        assert abs(ly.delta_residual(d, a, g, nu, sigma, a0)) <= 1e-12 * scale


def test_selection_from_rate_satisfies_the_matrix_inequality():
    cp = rates.poincare_constant_quadratic(1.0, 1.0, 0.1875)
    rep = rates.decay_rate(HypoParams(1.0, 1.0, -0.1875, 0.0), 0.1875, cp, quadratic=True)
    i = rep.intermediates
    sel = ly.select_gamma_delta(i["a"], i["gamma"], 1.0, 1.0, 0.1875)
    assert sel.delta == pytest.approx(i["delta"], rel=1e-12)
    V = Quadratic([[0.1875]])
    cert = ly.verify_lyapunov_inequality(V, Box.of([-1.0], [1.0]), 5, sel, rep.params)
    assert cert.passed


def test_inflated_rate_is_rejected():
    sel = ly.select_gamma_delta(0.0, 0.0, 1.0, 1.0, 1.0)
    V = Quadratic([[1.0]])
    p = HypoParams(1.0, 1.0, -1.0, 0.0)
    ok = ly.verify_lyapunov_inequality(V, Box.of([-1.0], [1.0]), 3, sel, p)
    assert ok.passed
    bad = ly.LyapunovSelection(sel.a, sel.gamma, sel.delta - 0.5, sel.eta, sel.mu)
    assert not ly.verify_lyapunov_inequality(V, Box.of([-1.0], [1.0]), 3, bad, p).passed
    # a larger delta only weakens the inequality
    loose = ly.LyapunovSelection(sel.a, sel.gamma, sel.delta + 0.5, sel.eta, sel.mu)
    assert ly.verify_lyapunov_inequality(V, Box.of([-1.0], [1.0]), 3, loose, p).passed


def test_sandwich_on_random_hessians():
    rng = np.random.default_rng(9)
    for _ in range(300):
        n, nu = int(rng.integers(1, 4)), rng.uniform(0.3, 3)
        H = random_spd(rng, n, 0.01, 6)
        a0 = float(np.linalg.eigvalsh(H)[0])
        a = max(0.0, nu * nu / 4 - a0) + rng.uniform(0.01, 2)
        assert min(ly.sandwich_margins(H, a, a0, nu)) >= -1e-10


def test_sandwich_verifier_on_potential():
    ok, worst = ly.verify_sandwich(Quadratic([[1.0]]), Box.of([-1.0], [1.0]), 3, 0.0, 1.0, 1.0)
    assert ok


def test_double_well_certificate_frozen():
    res = rates.optimize_rate(DoubleWell(1.0, 1.0), Box.of([-5.0], [5.0]), 201, 1.0, 1.0, c_pi=0.1)
    p = res.feasible.params
    lhs, rhs, ok = ly.trace_inequality_check(DoubleWell(1.0, 1.0), [1.0], p)
    assert ok
    assert all(t >= 0 for t in ly.kronecker_trace(DoubleWell(1.0, 1.0), [1.0], p))


def test_hypoelliptic_certificate():
    p = HypoParams(1.0, 1.0, 0.0, 0.0)
    c = ly.hypoelliptic_certificate(0.1, p, 0.0)
    assert c.feasible and c.epsilon == pytest.approx(0.125, rel=1e-9)
    assert (c.gamma1, c.gamma2) == (0.001, 2.048)
    bad = ly.hypoelliptic_certificate(0.1, p, 0.0, eps=0.5)
    assert not bad.feasible
    assert ly.hypoelliptic_certificate(1.0, p, 3.0, n_w=100, n_t=100).feasible
