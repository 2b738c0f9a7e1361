import numpy as np
import pytest

from she import qcqp
from she.array_model import ArrayGeometry, angle_grid, db2lin, desk_config
from she.metrics import radar_sinrs_effective
from she.receive_filter import (ReceiveFilterState, build_cache, build_mm_subproblem,
                                closed_form_single_angle, exact_constraint_values,
                                matched_filter, optimize_receive_filter, update_auxiliary_l,
                                surrogate_constraint_values)
from conftest import crandn


def _cfg(clutter=2, m_r=4):
    return desk_config(geometry=ArrayGeometry(16, m_r),
                       clutter_angles=[-45.0, 30.0][:clutter],
                       clutter_amplitudes=[np.sqrt(db2lin(15.0))] * clutter)


def test_auxiliary_l_ratio_recovery(rng):
    cfg = _cfg()
    grid = angle_grid(0, 5, 2.5)
    Y, w = crandn(rng, 16, 3), crandn(rng, 4)
    l = update_auxiliary_l(w, Y, cfg, grid)
    assert np.all(l >= 0)
    sinr = radar_sinrs_effective(w, Y, grid, cfg)
    # with c = 0 the constraint LHS is -(2 l sqrt(N) - l^2 D) = -SINR
    lhs = exact_constraint_values(w, l, 0.0, Y, cfg, grid)
    assert np.max(np.abs(-lhs - sinr) / sinr) <= 1e-10
    assert not np.any(update_auxiliary_l(w, np.zeros((16, 3)), cfg, grid))


def test_single_angle_no_clutter_identity(rng):
    cfg = _cfg(clutter=0)
    Y, w = crandn(rng, 16, 3), crandn(rng, 4)
    l = update_auxiliary_l(w, Y, cfg, [0.0])[0]
    sinr = radar_sinrs_effective(w, Y, [0.0], cfg)[0]
    D = cfg.noise_radar * np.vdot(w, w).real
    num = np.sum(np.abs(w.conj() @ np.ones((4, 16)) @ Y) ** 2)
    assert np.isclose(l, abs(cfg.target_amplitude) * np.sqrt(num) / D)
    assert np.isclose(2 * l * abs(cfg.target_amplitude) * np.sqrt(num) - l ** 2 * D, sinr)


def test_mm_tightness_and_restriction(rng):
    cfg = _cfg()
    grid = angle_grid(0, 5, 2.5)
    Y, w = crandn(rng, 16, 3), crandn(rng, 4)
    l = update_auxiliary_l(w, Y, cfg, grid)
    for c in (0.0, 3.0):
        s = surrogate_constraint_values(w, l, c, w, Y, cfg, grid)
        e = exact_constraint_values(w, l, c, Y, cfg, grid)
        assert np.max(np.abs(s - e)) <= 1e-10 * max(1.0, np.max(np.abs(e)))
    for _ in range(200):
        wp = w + 0.5 * crandn(rng, 4)
        s = surrogate_constraint_values(wp, l, 1.0, w, Y, cfg, grid)
        e = exact_constraint_values(wp, l, 1.0, Y, cfg, grid)
        assert np.all(e <= s + 1e-9 * np.maximum(1.0, np.abs(s)))


def test_subproblem_zero_l(rng):
    cfg = _cfg()
    grid = angle_grid(0, 5, 2.5)
    Y, w = crandn(rng, 16, 3), matched_filter(cfg)
    state = ReceiveFilterState(w=w, l=np.zeros(len(grid)))
    prob = build_mm_subproblem(state, build_cache(w, Y, cfg, grid), cfg)
    sol = qcqp.solve(prob)
    assert sol.ok and abs(sol.extra[-1]) <= 1e-7


@pytest.mark.parametrize("seed", range(3))
def test_monotone_and_scale_invariant(seed):
    rng = np.random.default_rng(seed)
    cfg = _cfg()
    grid = angle_grid(0, 2.5, 2.5)
    Y = crandn(rng, 16, 3) / np.sqrt(48)
    w0 = matched_filter(cfg)
    st = optimize_receive_filter(Y, w0, cfg, grid)
    mins = [row["min_sinr"] for row in st.trace]
    assert np.all(np.diff(mins) >= -1e-9 * max(mins))
    assert np.isclose(np.linalg.norm(st.w), 1.0)
    st5 = optimize_receive_filter(Y, 5 * w0, cfg, grid)
    assert abs(mins[-1] - st5.trace[-1]["min_sinr"]) <= 1e-6 * mins[-1]


def test_zero_effective_returns_normalized_init():
    cfg = _cfg()
    st = optimize_receive_filter(np.zeros((16, 3)), 3 * matched_filter(cfg), cfg, [0.0])
    assert np.allclose(st.w, matched_filter(cfg))
    with pytest.raises(ValueError):
        optimize_receive_filter(np.ones((16, 3)), np.zeros(4), cfg, [0.0])


def test_closed_form_dominates_random_filters(rng):
    cfg = _cfg()
    Y = crandn(rng, 16, 3)
    w = closed_form_single_angle(Y, cfg, 1.0)
    best = radar_sinrs_effective(w, Y, [1.0], cfg)[0]
    for _ in range(100):
        assert radar_sinrs_effective(crandn(rng, 4), Y, [1.0], cfg)[0] <= best * (1 + 1e-12)
    cfg0 = _cfg(clutter=0)
    w0 = closed_form_single_angle(Y, cfg0, 0.0)
    expected = abs(cfg0.target_amplitude) ** 2 * np.sum(np.abs(np.ones(16) @ Y) ** 2) * 4 \
        / cfg0.noise_radar
    assert np.isclose(radar_sinrs_effective(w0, Y, [0.0], cfg0)[0], expected)
