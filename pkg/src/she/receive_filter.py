"""Radar receive filter: max-min SINR over the target-angle grid.

The ratio objective is handled with the quadratic transform (auxiliaries
``l_k``) and the numerator is replaced by its linear minorant at the current
filter, which leaves a convex program in ``(w, t, c)`` per outer step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import qcqp
from .array_model import SystemConfig, radar_channel, receive_steering
from .metrics import radar_sinrs_effective


class DegenerateCache(ValueError):
    pass


class SolverStall(RuntimeError):
    pass


@dataclass
class ReceiveFilterState:
    w: np.ndarray
    l: np.ndarray
    c: float = 0.0
    iteration: int = 0
    trace: list = field(default_factory=list)

    @property
    def min_sinr(self) -> float:
        return self.trace[-1]["min_sinr"] if self.trace else float("nan")


@dataclass
class ReceiveMmCache:
    Lambda: np.ndarray  # (K, M_r)
    kappa_bar: np.ndarray  # (K,)
    clutter_stack: np.ndarray  # (M_r, I * (U+1))


def _target_channels(config: SystemConfig, grid) -> np.ndarray:
    return radar_channel(np.atleast_1d(np.asarray(grid, dtype=float)), config.geometry)


def clutter_stack(effective: np.ndarray, config: SystemConfig) -> np.ndarray:
    """L = [s_1 A~(th_1) Y, ..., s_I A~(th_I) Y] as one (M_r, I(U+1)) block."""
    if config.num_clutter == 0:
        return np.zeros((config.num_rx, 0), dtype=complex)
    chans = radar_channel(config.clutter_angles, config.geometry)
    blocks = config.clutter_amplitudes[:, None, None] * (chans @ effective)
    return np.concatenate(list(blocks), axis=1)


def _denominator(w, L, config) -> float:
    return float(np.sum(np.abs(w.conj() @ L) ** 2) + config.noise_radar * np.vdot(w, w).real)


def update_auxiliary_l(w, effective, config: SystemConfig, grid) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    chans = _target_channels(config, grid)
    numer = np.sum(np.abs(np.einsum("r,krt->kt", w.conj(), chans) @ effective) ** 2, axis=1)
    denom = _denominator(w, clutter_stack(effective, config), config)
    return abs(config.target_amplitude) * np.sqrt(numer) / denom


def build_cache(w, effective, config: SystemConfig, grid) -> ReceiveMmCache:
    w = np.asarray(w, dtype=complex)
    chans = _target_channels(config, grid)
    ay = chans @ effective  # (K, M_r, U+1)
    rows = np.einsum("r,krj->kj", w.conj(), ay)  # w^H A~_k Y
    kappa_bar = np.sum(np.abs(rows) ** 2, axis=1)
    Lambda = np.einsum("kj,krj->kr", rows, ay.conj())  # w^H A~ Y Y^H A~^H
    return ReceiveMmCache(Lambda=Lambda, kappa_bar=kappa_bar,
                          clutter_stack=clutter_stack(effective, config))


def build_mm_subproblem(state: ReceiveFilterState, cache: ReceiveMmCache,
                        config: SystemConfig, radius_factor: float = 10.0) -> qcqp.QcqpProblem:
    """Convex surrogate in (w, t_1..t_K, c); minimizes -c.

    Constraints per grid angle k:
      l_k^2 (||w^H L||^2 + s_r^2 ||w||^2) - 2 l_k |s_0| t_k + c <= 0
      t_k^2 + kappa_k - 2 Re(Lambda_k w) <= 0,   -t_k <= 0
    plus the safeguard ||w||^2 <= (radius_factor ||w^t||)^2.
    """
    if np.any(cache.kappa_bar < 0):
        raise DegenerateCache("negative kappa_bar")
    K = len(cache.kappa_bar)
    m_r = len(state.w)
    p = K + 1
    L = cache.clutter_stack
    D = L @ L.conj().T + config.noise_radar * np.eye(m_r)
    amp = abs(config.target_amplitude)
    cons = []
    for k in range(K):
        el = np.zeros(p)
        el[k] = -2.0 * state.l[k] * amp
        el[K] = 1.0
        cons.append(qcqp.QuadForm(quad=state.l[k] ** 2 * D, extra_lin=el))
    for k in range(K):
        eq = np.zeros(p)
        eq[k] = 1.0
        cons.append(qcqp.QuadForm(lin=-cache.Lambda[k].conj(), const=float(cache.kappa_bar[k]),
                                  extra_quad=eq))
    for k in range(K):
        el = np.zeros(p)
        el[k] = -1.0
        cons.append(qcqp.QuadForm(extra_lin=el))
    r2 = (radius_factor ** 2) * float(np.vdot(state.w, state.w).real)
    cons.append(qcqp.QuadForm(quad=np.eye(m_r), const=-r2))
    obj = np.zeros(p)
    obj[K] = -1.0
    return qcqp.QcqpProblem(m_r, qcqp.QuadForm(extra_lin=obj), cons, num_extra=p)


def surrogate_constraint_values(w, l, c, w_ref, effective, config, grid) -> np.ndarray:
    """LHS of the MM-surrogate constraints (t_k at its largest admissible value)."""
    cache = build_cache(w_ref, effective, config, grid)
    lin = np.maximum(-cache.kappa_bar + 2 * np.real(cache.Lambda @ w), 0.0)
    D = _denominator(w, cache.clutter_stack, config)
    return l ** 2 * D - 2 * l * abs(config.target_amplitude) * np.sqrt(lin) + c


def exact_constraint_values(w, l, c, effective, config, grid) -> np.ndarray:
    """LHS of the quadratic-transform constraints written as <= 0."""
    chans = _target_channels(config, grid)
    numer = np.sum(np.abs(np.einsum("r,krt->kt", np.conj(w), chans) @ effective) ** 2, axis=1)
    D = _denominator(np.asarray(w), clutter_stack(effective, config), config)
    return l ** 2 * D - 2 * l * abs(config.target_amplitude) * np.sqrt(numer) + c


def matched_filter(config: SystemConfig) -> np.ndarray:
    return receive_steering(config.target_angle, config.geometry) / np.sqrt(config.num_rx)


def optimize_receive_filter(effective, w_init, config: SystemConfig, grid,
                            tol: float = 1e-4, max_outer: int = 50,
                            solver_tol: float = 1e-9) -> ReceiveFilterState:
    """Alternate l-updates and convex MM steps until min-SINR stalls."""
    w = np.asarray(w_init, dtype=complex).copy()
    nrm = np.linalg.norm(w)
    if nrm == 0:
        raise ValueError("w_init must be nonzero")
    w = w / nrm
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    K = len(grid)
    sinr = radar_sinrs_effective(w, effective, grid, config)
    state = ReceiveFilterState(w=w, l=np.zeros(K), c=float(sinr.min()))
    state.trace.append({"iteration": 0, "min_sinr": float(sinr.min()),
                        "sinr": sinr.tolist()})
    if not np.any(effective):
        return state
    for it in range(1, max_outer + 1):
        l = update_auxiliary_l(w, effective, config, grid)
        cache = build_cache(w, effective, config, grid)
        if np.all(cache.kappa_bar == 0):
            break
        state.l = l
        prob = build_mm_subproblem(state, cache, config)
        t0 = 0.5 * np.sqrt(cache.kappa_bar)
        D = _denominator(w, cache.clutter_stack, config)
        c0 = float(np.min(2 * l * abs(config.target_amplitude) * t0 - l ** 2 * D))
        c0 -= 1e-3 * (1.0 + abs(c0))
        sol = qcqp.solve(prob, tol=solver_tol, x0=w, extra0=np.append(t0, c0))
        if sol.status not in (qcqp.Status.OPTIMAL, qcqp.Status.ITERATION_LIMIT):
            break
        w_new = sol.x / np.linalg.norm(sol.x)
        new_sinr = radar_sinrs_effective(w_new, effective, grid, config)
        old_min, new_min = float(sinr.min()), float(new_sinr.min())
        if new_min < old_min - 1e-7 * max(1.0, abs(old_min)):
            if sol.status == qcqp.Status.OPTIMAL:
                raise SolverStall(f"min SINR dropped {old_min:.6e} -> {new_min:.6e}")
            break
        if new_min < old_min:
            break  # numerical noise; keep the previous filter
        w, sinr = w_new, new_sinr
        state.w, state.c, state.iteration = w, float(sol.extra[-1]), it
        state.trace.append({"iteration": it, "min_sinr": new_min, "sinr": sinr.tolist()})
        if new_min - old_min <= tol * max(abs(old_min), 1e-300):
            break
    return state


def closed_form_single_angle(effective, config: SystemConfig, theta: float) -> np.ndarray:
    """Principal generalized eigenvector maximizing the radar SINR at one angle."""
    at = radar_channel(theta, config.geometry) @ effective
    N = abs(config.target_amplitude) ** 2 * at @ at.conj().T
    L = clutter_stack(effective, config)
    D = L @ L.conj().T + config.noise_radar * np.eye(config.num_rx)
    vals, vecs = scipy.linalg.eigh(N, D)
    w = vecs[:, -1]
    return w / np.linalg.norm(w)
