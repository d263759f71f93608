import math

import numpy as np
import pytest

from hypokin import lyapunov, solver as S
from hypokin.errors import NumericFailure, RejectedInput
from hypokin.potential import DoubleWell, Quadratic


@pytest.fixture(scope="module")
def quad():
    V = Quadratic([[1.0]])
    return S.KFPSolver(V, 1.0, 1.0, S.default_grid(V, 1.0, 1.0, 64, 64))


def test_domain_choice():
    V = Quadratic([[1.0]])
    g = S.default_grid(V, 1.0, 1.0, 64, 64)
    assert g.Lv == pytest.approx(7.0)
    assert math.exp(-0.5 * g.Lx ** 2) < 1e-14
    with pytest.raises(RejectedInput):
        S.PhaseGrid(1.0, 1.0, 32, 64)


def test_weights_normalized(quad):
    assert np.sum(quad.m) * quad.cell == pytest.approx(1.0, abs=1e-14)


def test_steady_state_is_a_fixed_point(quad):
    h = np.ones((64, 64))
    f0 = quad.functionals(h)
    dt = quad.stable_dt()
    h = quad.advance(h, dt, 10_000)
    f1 = quad.functionals(h)
    for k in f0:
        assert abs(f1[k] - f0[k]) <= 1e-10
    assert f1["l2sq"] < 1e-20 and f1["S"] < 1e-20


def test_ou_acts_on_the_first_hermite_mode(quad):
    # exact OU flow maps h = v to exp(-nu t) v
    h = np.tile(quad.grid.v, (quad.grid.nx, 1))
    t = 0.05
    out = quad.ou(h, t)
    core = np.abs(quad.grid.v) < 3
    err = np.abs(out - math.exp(-t) * h)[:, core].max()
    assert err < 2e-3


def test_ou_is_second_order_in_dv():
    errs = []
    V = Quadratic([[1.0]])
    for n in (64, 128):
        sv = S.KFPSolver(V, 1.0, 1.0, S.default_grid(V, 1.0, 1.0, 64, n))
        v = sv.grid.v
        h = np.tile(v, (64, 1))
        out = h.copy()
        for _ in range(10):
            out = sv.ou(out, 0.01)
        w = np.exp(-v ** 2 / 2)
        errs.append(math.sqrt(np.sum(w * (out[0] - math.exp(-0.1) * v) ** 2) / np.sum(w)))
    assert errs[0] / errs[1] > 3


def test_mass_and_l2_contraction(quad):
    h = quad.init({"kind": "gaussian_shifted", "mean": [1.0, 0.0]})
    assert quad.mass(h) == pytest.approx(1.0, abs=1e-14)
    assert h.min() > 0
    dt = quad.stable_dt()
    prev_mass, prev_l2 = quad.mass(h), quad.functionals(h)["l2sq"]
    for _ in range(50):
        h = quad.step(h, dt)
        m, l2 = quad.mass(h), quad.functionals(h)["l2sq"]
        assert abs(m - prev_mass) <= 1e-12
        assert l2 < prev_l2
        prev_mass, prev_l2 = m, l2


def test_cfl_rejection(quad):
    h = np.ones((64, 64))
    with pytest.raises(NumericFailure):
        quad.step(h, 1.0)
    with pytest.raises(RejectedInput):
        quad.step(h, -1.0)


def test_initial_data(quad):
    assert np.all(quad.init({"kind": "steady"}) == 1)
    hp = quad.init({"kind": "h_perturbation", "amplitude": 0.5, "center": [0.0, 0.0], "width": 1.0})
    assert quad.mass(hp) == pytest.approx(1.0)
    rough = quad.init({"kind": "rough_indicator", "interval": [-1.0, 1.0], "smoothing": 0.0})
    smooth = quad.init({"kind": "rough_indicator", "interval": [-1.0, 1.0], "smoothing": 1.0})
    assert quad.functionals(rough)["gradx_sq"] > 2 * quad.functionals(smooth)["gradx_sq"]
    with pytest.raises(RejectedInput):
        quad.init({"kind": "rough_indicator", "interval": [50.0, 60.0]})
    with pytest.raises(RejectedInput):
        quad.init({"kind": "nope"})


def test_identity_weight_definition(quad):
    h = quad.init({"kind": "gaussian_shifted", "mean": [0.5, 0.5]})
    f = quad.functionals(h, a=None)
    u1, u2 = quad.gradients(h)
    raw_v = np.sum(quad.m * u2 ** 2) * quad.cell
    assert f["S"] == pytest.approx(2 * (f["gradx_sq"] + raw_v), rel=1e-13)
    assert quad.ds_dt_rhs(h, None)["moving"] == 0.0


def test_sandwich_along_a_trajectory(quad):
    sc = lyapunov.sandwich_constants(0.0, 1.0, 1.0)
    h = quad.init({"kind": "gaussian_shifted", "mean": [1.0, 0.0]})
    _, series = S.evolve(quad, h, 1.0, 1.0 / math.ceil(1.0 / quad.stable_dt()), 5)
    Sv = series.column("S")
    mid = 2 * (series.column("gradx_sq") + series.column("gradv_weighted"))
    # the weight form here is 2 * integral of u^T diag(I, V'' + (1 - alpha0)) u
    assert np.all(sc.c1 * Sv <= mid * (1 + 1e-12))
    assert np.all(mid <= sc.c2 * Sv * (1 + 1e-12))


def test_phi_nonincreasing_and_rate_on_small_grid(quad):
    h = quad.init({"kind": "gaussian_shifted", "mean": [1.0, 0.0]})
    dt = 5.0 / math.ceil(5.0 / quad.stable_dt())
    _, series = S.evolve(quad, h, 5.0, dt, 10)
    phi = series.column("Phi")
    assert np.all(np.diff(phi) <= 1e-6 * phi[:-1])
    assert np.all(np.diff(series.column("l2sq")) < 0)
    l2 = series.column("l2sq")
    assert l2[-1] < l2[0] * math.exp(-3)


def test_evolve_rejects_bad_horizon(quad):
    with pytest.raises(RejectedInput):
        S.evolve(quad, np.ones((64, 64)), 1.0, 0.3)


def test_ds_dt_identity_with_moving_weight():
    V = DoubleWell(0.25, 0.5)
    sv = S.KFPSolver(V, 1.0, 1.0, S.default_grid(V, 1.0, 1.0, 128, 128))
    h = sv.init({"kind": "h_perturbation", "amplitude": 0.3, "center": [0.5, 0.0], "width": 0.8})
    dt = sv.stable_dt() / 4
    h = sv.advance(h, dt, 5)
    res = S.ds_dt_residual(sv, h, dt, a=2.0)
    assert res["moving"] != 0.0
    assert res["residual"] < 5e-3


def test_hypo_smooth_data_has_flat_slopes(quad):
    h = quad.init({"kind": "gaussian_shifted", "mean": [0.5, 0.0]})
    r = S.hypoelliptic_experiment(quad, h, (2e-3, 1e-2), 1e-4)
    assert abs(r["slope_x"]) < 0.1
    with pytest.raises(NumericFailure):
        S.hypoelliptic_experiment(quad, h, (1e-4, 1e-3), 1e-4)


def test_snapshot_roundtrip(tmp_path, quad):
    h = quad.init({"kind": "gaussian_shifted", "mean": [1.0, 0.0]})
    p = tmp_path / "h.bin"
    S.save_snapshot(p, quad, h)
    meta, back = S.load_snapshot(p)
    assert (meta["nx"], meta["nv"]) == (64, 64)
    assert meta["v_extent"] == (-quad.grid.Lv, quad.grid.Lv)
    assert np.array_equal(back, h)
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(RejectedInput):
        S.load_snapshot(tmp_path / "bad.bin")


def test_series_rows(quad):
    _, series = S.evolve(quad, np.ones((64, 64)), quad.stable_dt() * 2, quad.stable_dt(), 1)
    rows = series.rows()
    assert list(rows[0]) == S.SERIES_COLUMNS and len(rows) == 3
