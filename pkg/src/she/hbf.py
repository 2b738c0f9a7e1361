"""Hybrid beamformer optimization for a fixed radar receive filter.

Augmented-Lagrangian splitting with the effective beamformer
``Y = A D_CI = [y_0, y_1, ..., y_U]``: a convex (Y, eta) step built from
WMMSE bounds and linearized secrecy/radar constraints, element-wise BCD for
the phase-only analog matrix, least squares for the digital matrix and a
dual ascent step.  A final pass with ``A`` fixed optimizes ``D_CI`` directly
so the constraints hold exactly at ``A D_CI``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg

from . import qcqp
from .array_model import ChannelSet, SystemConfig, radar_channel, transmit_steering
from .metrics import (BeamformerSet, clutter_filter_stack, eue_sinrs_effective,
                      lue_sinrs_effective, rate, worst_case_sr, radar_sinrs_effective)

log = logging.getLogger(__name__)

LN2 = float(np.log(2.0))


class InfeasibleSubproblem(RuntimeError):
    pass


class SingularGram(RuntimeWarning):
    pass


class MaxInnerIterations(RuntimeWarning):
    pass


@dataclass
class WmmseState:
    kappa: np.ndarray  # (U,) complex
    omega: np.ndarray  # (U,) >= 1


@dataclass
class AlState:
    effective: np.ndarray  # Y, (M_t, U+1)
    dual: np.ndarray  # Z, same shape
    penalty: float = 10.0
    eta: float = 0.0
    inner_iteration: int = 0

    def __post_init__(self):
        if self.effective.shape != self.dual.shape:
            raise ValueError("effective and dual shapes differ")
        if not self.penalty > 0:
            raise ValueError("penalty must be positive")


@dataclass
class HbfMmCache:
    G: np.ndarray  # (N, M_t, M_t)
    Upsilon: np.ndarray  # (U, N)
    g0: np.ndarray  # (U, N, M_t)
    J: np.ndarray  # (K, M_t, M_t)
    Psi: np.ndarray  # (K,)
    M_lin: np.ndarray  # (K, U+1, M_t)
    B: np.ndarray  # (I, M_t)
    noise_w: float = 0.0  # sigma_r^2 ||w||^2


@dataclass
class HbfOptions:
    penalty: float = 10.0
    penalty_growth: float = 1.0
    max_inner: int = 100
    consensus_tol: float = 1e-3  # multiplied by sqrt(P)
    eta_tol: float = 1e-4
    bcd_sweeps: int = 1
    solver_tol: float = 1e-9
    polish_iters: int = 30
    polish_tol: float = 1e-7
    bound_form: str = "natural"  # or "log2"
    use_i2s: bool = True
    fully_digital: bool = False
    radar_constraint: bool = True


@dataclass
class InnerResult:
    beamformers: BeamformerSet
    al: AlState
    wmmse: WmmseState
    trace: List[dict] = field(default_factory=list)
    converged: bool = False
    power_slack: bool = False
    consensus_residual: float = 0.0
    admm_digital: Optional[np.ndarray] = None  # D_CI before the fixed-analog pass


# ---------------------------------------------------------------- WMMSE

def update_equalizers(effective, channels: ChannelSet, noise_user) -> np.ndarray:
    g = channels.lue.conj().T @ np.asarray(effective)  # (U, U+1): h_u^H y_j
    u = np.arange(channels.num_users)
    denom = np.sum(np.abs(g) ** 2, axis=1) + np.broadcast_to(noise_user, u.shape)
    return np.conj(g[u, u + 1]) / denom


def update_weights(lue_sinrs) -> np.ndarray:
    s = np.asarray(lue_sinrs, dtype=float)
    if np.any(s < 0):
        raise ValueError("SINRs must be nonnegative")
    return 1.0 + s


def mse_all(kappa, channels: ChannelSet, effective, noise_user) -> np.ndarray:
    g = channels.lue.conj().T @ np.asarray(effective)
    u = np.arange(channels.num_users)
    return (np.abs(kappa) ** 2 * (np.sum(np.abs(g) ** 2, axis=1) + noise_user)
            - 2 * np.real(kappa * g[u, u + 1]) + 1.0)


def wmmse_bound(omega, eps, form: str = "log2") -> np.ndarray:
    """Rate lower surrogate; both forms equal the rate at omega = 1/eps."""
    omega = np.asarray(omega, dtype=float)
    if form == "log2":
        return np.log2(omega) - omega * eps + 1.0
    if form == "natural":
        return (np.log(omega) - omega * eps + 1.0) / LN2
    raise ValueError(f"unknown bound form {form!r}")


def wmmse_update(effective, channels: ChannelSet, config: SystemConfig) -> WmmseState:
    kappa = update_equalizers(effective, channels, config.noise_user)
    sinr = lue_sinrs_effective(channels.lue, effective, config.noise_user)
    return WmmseState(kappa=kappa, omega=update_weights(sinr))


# ---------------------------------------------------------------- MM cache

def _target_rows(w, config: SystemConfig, grid) -> np.ndarray:
    """Rows w^H A~(theta_k), shape (K, M_t)."""
    chans = radar_channel(np.atleast_1d(np.asarray(grid, dtype=float)), config.geometry)
    return np.einsum("r,krt->kt", np.conj(w), chans)


def build_cache(effective, w, channels: ChannelSet, config: SystemConfig, grid,
                radar: bool = True) -> HbfMmCache:
    Y = np.asarray(effective, dtype=complex)
    w = np.asarray(w, dtype=complex)
    he = channels.eue_samples  # rows h_e^n
    G = np.einsum("ni,nj->nij", he, he.conj())
    y0 = Y[:, 0]
    gain0 = np.abs(he.conj() @ y0) ** 2  # y0^H G_n y0
    scale = 2.0 ** config.eue_rate_caps - 1.0  # (U,)
    Upsilon = scale[:, None] * (gain0[None, :] - config.noise_eue)
    Gy0 = G @ y0  # (N, M_t)
    g0 = 2.0 * scale[:, None, None] * Gy0[None, :, :]
    gamma = float(config.radar_sinr_target)
    B = clutter_filter_stack(w, config)
    noise_w = float(config.noise_radar * np.vdot(w, w).real)
    m_t = Y.shape[0]
    if radar and gamma > 0:
        rows = _target_rows(w, config, grid)
        J = np.einsum("ki,kj->kij", rows.conj(), rows)
        amp2 = abs(config.target_amplitude) ** 2
        JY = J @ Y  # (K, M_t, U+1)
        Psi = amp2 / gamma * np.real(np.einsum("ij,kij->k", Y.conj(), JY))
        M_lin = 2.0 * amp2 / gamma * np.conj(np.transpose(JY, (0, 2, 1)))
    else:
        J = np.zeros((0, m_t, m_t), dtype=complex)
        Psi = np.zeros(0)
        M_lin = np.zeros((0, Y.shape[1], m_t), dtype=complex)
    return HbfMmCache(G=G, Upsilon=Upsilon, g0=g0, J=J, Psi=Psi, M_lin=M_lin, B=B,
                      noise_w=noise_w)


def exact_secrecy_values(effective, channels: ChannelSet, config: SystemConfig) -> np.ndarray:
    """|h^H y_u|^2 - (2^xi - 1)(|h^H y_0|^2 + s_e^2), shape (U, N); <= 0 is feasible."""
    g = np.abs(channels.eue_samples.conj() @ effective) ** 2  # (N, U+1)
    scale = 2.0 ** config.eue_rate_caps - 1.0
    return g[:, 1:].T - scale[:, None] * (g[:, 0][None, :] + config.noise_eue)


def linearized_secrecy_values(effective, cache: HbfMmCache) -> np.ndarray:
    Y = np.asarray(effective)
    quad = np.real(np.einsum("iu,nij,ju->un", Y[:, 1:].conj(), cache.G, Y[:, 1:]))
    lin = np.real(np.einsum("uni,i->un", cache.g0.conj(), Y[:, 0]))
    return quad - lin + cache.Upsilon


def exact_radar_values(effective, w, config: SystemConfig, grid) -> np.ndarray:
    """||BY||^2 + s_r^2||w||^2 - (|s_0|^2/gamma) ||w^H A~_k Y||^2 per grid angle."""
    Y = np.asarray(effective)
    gamma = float(config.radar_sinr_target)
    rows = _target_rows(w, config, grid)
    num = np.sum(np.abs(rows @ Y) ** 2, axis=1)
    den = (np.sum(np.abs(clutter_filter_stack(w, config) @ Y) ** 2)
           + config.noise_radar * np.vdot(w, w).real)
    return den - abs(config.target_amplitude) ** 2 / gamma * num


def linearized_radar_values(effective, cache: HbfMmCache) -> np.ndarray:
    Y = np.asarray(effective)
    den = np.sum(np.abs(cache.B @ Y) ** 2) + cache.noise_w
    lin = np.real(np.einsum("kji,ij->k", cache.M_lin, Y))
    return den - lin + cache.Psi


# ---------------------------------------------------------------- convex step

def _vec(Y) -> np.ndarray:
    return np.asarray(Y).reshape(-1, order="F")


def _unvec(x, m_t: int) -> np.ndarray:
    return np.asarray(x).reshape(m_t, -1, order="F")


def _blockdiag(blocks: List[Optional[np.ndarray]], m: int) -> np.ndarray:
    n = len(blocks)
    out = np.zeros((n * m, n * m), dtype=complex)
    for j, b in enumerate(blocks):
        if b is not None:
            out[j * m:(j + 1) * m, j * m:(j + 1) * m] = b
    return out


def constraint_forms(wmmse: WmmseState, cache: HbfMmCache, channels: ChannelSet,
                     config: SystemConfig, form: str = "natural",
                     radar: bool = True) -> List[qcqp.QuadForm]:
    """All (Y, eta) constraints over vec(Y) with one extra variable eta."""
    m_t, U = channels.lue.shape
    S = U + 1
    dim = m_t * S
    cons = []
    if form == "natural":
        a = (np.log(wmmse.omega) + 1.0) / LN2
        b = np.full(U, 1.0 / LN2)
    elif form == "log2":
        a = np.log2(wmmse.omega) + 1.0
        b = np.ones(U)
    else:
        raise ValueError(f"unknown bound form {form!r}")
    noise = np.broadcast_to(config.noise_user, (U,))
    for u in range(U):
        h = channels.lue[:, u]
        k = wmmse.kappa[u]
        c = b[u] * wmmse.omega[u]
        hh = np.outer(h, h.conj())
        lin = np.zeros(dim, dtype=complex)
        lin[(u + 1) * m_t:(u + 2) * m_t] = -c * np.conj(k) * h
        cons.append(qcqp.QuadForm(
            quad=_blockdiag([c * abs(k) ** 2 * hh] * S, m_t), lin=lin,
            const=float(c * (abs(k) ** 2 * noise[u] + 1.0) - a[u]),
            extra_lin=np.array([1.0])))
    cons.append(qcqp.QuadForm(quad=np.eye(dim), const=-float(config.power_budget)))
    for u in range(U):
        for n in range(cache.G.shape[0]):
            blocks: List[Optional[np.ndarray]] = [None] * S
            blocks[u + 1] = cache.G[n]
            lin = np.zeros(dim, dtype=complex)
            lin[:m_t] = -0.5 * cache.g0[u, n]
            cons.append(qcqp.QuadForm(quad=_blockdiag(blocks, m_t), lin=lin,
                                      const=float(cache.Upsilon[u, n])))
    if radar:
        BB = cache.B.conj().T @ cache.B
        for k in range(cache.J.shape[0]):
            lin = -0.5 * _vec(cache.M_lin[k].conj().T)
            cons.append(qcqp.QuadForm(quad=_blockdiag([BB] * S, m_t), lin=lin,
                                      const=float(cache.noise_w + cache.Psi[k])))
    return cons


def substitute(form: qcqp.QuadForm, T: np.ndarray) -> qcqp.QuadForm:
    """Rewrite f(x) as a function of z with x = T z."""
    quad = None if form.quad is None else T.conj().T @ form.quad @ T
    lin = None if form.lin is None else T.conj().T @ form.lin
    return qcqp.QuadForm(quad=quad, lin=lin, const=form.const,
                         extra_lin=form.extra_lin, extra_quad=form.extra_quad)


def _selection(m_t: int, S: int, use_i2s: bool) -> Optional[np.ndarray]:
    if use_i2s:
        return None
    return np.eye(m_t * S)[:, m_t:]


def build_y_subproblem(al: AlState, wmmse: WmmseState, cache: HbfMmCache, w,
                       config: SystemConfig, channels: ChannelSet, anchor,
                       opts: Optional[HbfOptions] = None) -> qcqp.QcqpProblem:
    """min -eta + rho/2 ||Y - (anchor - Z)||^2 subject to the surrogate constraints.

    ``anchor`` is A D_CI.  Without the I2S stream the y_0 block is removed
    from the variables (the returned problem is then over vec(Y_C)).
    """
    opts = opts or HbfOptions()
    m_t, S = al.effective.shape
    c = _vec(np.asarray(anchor) - al.dual)
    rho = al.penalty
    obj = qcqp.QuadForm(quad=0.5 * rho * np.eye(m_t * S), lin=-0.5 * rho * c,
                        const=0.5 * rho * float(np.vdot(c, c).real),
                        extra_lin=np.array([-1.0]))
    cons = constraint_forms(wmmse, cache, channels, config, opts.bound_form,
                            radar=opts.radar_constraint and cache.J.shape[0] > 0)
    T = _selection(m_t, S, opts.use_i2s)
    if T is not None:
        obj = substitute(obj, T)
        cons = [substitute(f, T) for f in cons]
    return qcqp.QcqpProblem(m_t * S if T is None else T.shape[1], obj, cons, num_extra=1)


# ---------------------------------------------------------------- analog / digital

def phases_to_analog(phases) -> np.ndarray:
    """exp(j phi) with |.| == 1 exactly in floating point."""
    phases = np.asarray(phases, dtype=float)
    c, s = np.cos(phases), np.sin(phases)
    out = c + 1j * s
    bad = np.argwhere(np.abs(out) != 1.0)
    steps = (0, 1, -1, 2, -2)
    for idx in map(tuple, bad):
        done = False
        for dc in steps:
            cc = _ulp_step(c[idx], dc)
            for ds in steps:
                z = np.complex128(complex(cc, _ulp_step(s[idx], ds)))
                if np.abs(z) == 1.0:
                    out[idx] = z
                    done = True
                    break
            if done:
                break
    return out


def _ulp_step(x: float, k: int) -> float:
    target = np.inf if k > 0 else -np.inf
    for _ in range(abs(k)):
        x = np.nextafter(x, target)
    return float(x)


def random_analog(m_t: int, n_rf: int, rng: np.random.Generator) -> np.ndarray:
    return phases_to_analog(rng.uniform(-np.pi, np.pi, size=(m_t, n_rf)))


def update_analog_bcd(target, analog, digital, sweeps: int = 1,
                      objective_trace: Optional[list] = None) -> np.ndarray:
    """Element-wise BCD on min ||T - A D||_F^2 over unit-modulus A.

    Rows of A decouple, so each column update handles all rows at once; with
    ``objective_trace`` the objective after every single-element update is
    appended (rows are visited in order within a column).
    """
    T = np.asarray(target, dtype=complex)
    A = np.array(analog, dtype=complex)
    D = np.asarray(digital, dtype=complex)
    R = T - A @ D
    for _ in range(sweeps):
        for j in range(A.shape[1]):
            d = D[j]
            c = (R + np.outer(A[:, j], d)) @ d.conj()
            nz = c != 0
            new = A[:, j].copy()
            new[nz] = phases_to_analog(np.angle(c[nz]))
            delta = np.outer(new - A[:, j], d)
            if objective_trace is not None:
                before = np.sum(np.abs(R) ** 2, axis=1)
                after = np.sum(np.abs(R - delta) ** 2, axis=1)
                base = float(before.sum())
                objective_trace.extend((base + np.cumsum(after - before)).tolist())
            R -= delta
            A[:, j] = new
    return A


def update_digital(target, analog) -> np.ndarray:
    A = np.asarray(analog, dtype=complex)
    gram = A.conj().T @ A
    rhs = A.conj().T @ np.asarray(target, dtype=complex)
    if np.linalg.cond(gram) > 1e12:
        warnings.warn("analog Gram matrix is near singular; regularizing", SingularGram,
                      stacklevel=2)
        gram = gram + 1e-10 * A.shape[0] * np.eye(gram.shape[0])
    return scipy.linalg.solve(gram, rhs, assume_a="pos")


def update_dual(al: AlState, analog, digital) -> np.ndarray:
    return al.dual + al.effective - np.asarray(analog) @ np.asarray(digital)


# ---------------------------------------------------------------- driver pieces

def initial_effective(channels: ChannelSet, config: SystemConfig, use_i2s: bool = True,
                      theta=None) -> np.ndarray:
    """Y with y_u along h_u projected off the EUE samples and y_0 along a_t(theta_0)."""
    m_t, U = channels.lue.shape
    he = channels.eue_samples
    Y = np.zeros((m_t, U + 1), dtype=complex)
    if he.shape[0] < m_t:
        q, _ = np.linalg.qr(he.conj().T)
        proj = np.eye(m_t) - q @ q.conj().T
    else:
        proj = np.eye(m_t)
    for u in range(U):
        v = proj @ channels.lue[:, u]
        n = np.linalg.norm(v)
        Y[:, u + 1] = v / n if n > 0 else 0.0
    if use_i2s:
        th = config.target_angle if theta is None else theta
        Y[:, 0] = transmit_steering(th, config.geometry) / np.sqrt(m_t)
    total = np.linalg.norm(Y) ** 2
    return Y * np.sqrt(config.power_budget / total) if total > 0 else Y


def _eta_start(effective, wmmse, channels, config, form) -> float:
    eps = mse_all(wmmse.kappa, channels, effective, config.noise_user)
    return float(np.min(wmmse_bound(wmmse.omega, eps, form))) - 1.0


def _analog_for(config: SystemConfig, opts: HbfOptions, rng) -> np.ndarray:
    if opts.fully_digital:
        return np.eye(config.num_tx, dtype=complex)
    return random_analog(config.num_tx, config.num_rf, rng)


def _constraints_ok(Y, w, channels, config, grid, opts, tol: float = 0.0) -> bool:
    if np.any(exact_secrecy_values(Y, channels, config) > tol):
        return False
    if opts.radar_constraint and config.radar_sinr_target > 0:
        sinr = radar_sinrs_effective(w, Y, grid, config)
        if np.any(sinr < config.radar_sinr_target * (1 - 1e-9)):
            return False
    return float(np.linalg.norm(Y) ** 2) <= config.power_budget * (1 + 1e-9)


def polish_digital(analog, digital, w, channels: ChannelSet, config: SystemConfig, grid,
                   opts: HbfOptions, trace: Optional[list] = None) -> np.ndarray:
    """Fix A and run WMMSE-MM steps on D_CI directly (Y = A D_CI)."""
    A = np.asarray(analog)
    m_t, n_rf = A.shape
    S = channels.num_users + 1
    Tfull = np.kron(np.eye(S), A)
    keep = slice(None) if opts.use_i2s else slice(n_rf, None)
    T = Tfull[:, keep]
    D = np.array(digital, dtype=complex)
    if not opts.use_i2s:
        D[:, 0] = 0.0
    radar = opts.radar_constraint and config.radar_sinr_target > 0
    last = -np.inf
    for it in range(opts.polish_iters):
        Y = A @ D
        wm = wmmse_update(Y, channels, config)
        cache = build_cache(Y, w, channels, config, grid, radar=radar)
        cons = [substitute(f, T) for f in
                constraint_forms(wm, cache, channels, config, opts.bound_form, radar=radar)]
        obj = qcqp.QuadForm(extra_lin=np.array([-1.0]))
        prob = qcqp.QcqpProblem(T.shape[1], obj, cons, num_extra=1)
        z0 = _vec(D)[keep]
        sol = qcqp.solve(prob, tol=opts.solver_tol, x0=z0,
                         extra0=np.array([_eta_start(Y, wm, channels, config, opts.bound_form)]))
        if sol.status is qcqp.Status.INFEASIBLE:
            if it == 0:
                raise InfeasibleSubproblem("polish step infeasible at the first iterate")
            break
        if not sol.ok:
            log.warning("polish step ended with %s", sol.status.value)
            break
        z = np.zeros(n_rf * S, dtype=complex)
        z[keep] = sol.x
        D_new = _unvec(z, n_rf)
        eta = float(sol.extra[0])
        if trace is not None:
            trace.append({"polish_iter": it, "eta": eta})
        D = D_new
        if eta - last <= opts.polish_tol * max(1.0, abs(eta)):
            break
        last = eta
    return D


def rescale_power(analog, digital, w, channels, config, grid, opts):
    """Scale D_CI so ||A D_CI||_F^2 = P when no constraint breaks; else flag slack."""
    Y = analog @ digital
    p = float(np.linalg.norm(Y) ** 2)
    if p <= 0:
        return digital, True
    scaled = digital * np.sqrt(config.power_budget / p)
    Ys = analog @ scaled
    if _constraints_ok(Ys, w, channels, config, grid, opts, tol=1e-12):
        return scaled, False
    return digital, abs(p - config.power_budget) > 1e-6


def inner_loop(channels: ChannelSet, w, init: BeamformerSet, config: SystemConfig,
               grid, opts: Optional[HbfOptions] = None,
               effective0=None, outer_iter: int = 0, dual0=None) -> InnerResult:
    """Alternate the (Y, eta), A, D_CI, (kappa, omega) and Z updates.

    ``effective0`` is the expansion point of the first convex step (defaults
    to ``init.effective``); it must satisfy the exact constraints for the MM
    restriction to keep every iterate feasible.  ``dual0`` resumes a previous
    run's scaled dual variable.
    """
    opts = opts or HbfOptions()
    A = np.array(init.analog, dtype=complex)
    if not opts.fully_digital and not np.all(np.abs(A) == 1.0):
        raise ValueError("init analog matrix must be unit modulus")
    D = np.array(init.digital, dtype=complex)
    Y = np.array(init.effective if effective0 is None else effective0, dtype=complex)
    if not opts.use_i2s:
        Y[:, 0] = 0.0
        D[:, 0] = 0.0
    m_t, S = Y.shape
    dual = np.zeros_like(Y) if dual0 is None else np.array(dual0, dtype=complex)
    al = AlState(effective=Y, dual=dual, penalty=opts.penalty)
    wm = wmmse_update(Y, channels, config)
    al.eta = _eta_start(Y, wm, channels, config, opts.bound_form) + 1.0
    radar = opts.radar_constraint and config.radar_sinr_target > 0
    tol_res = opts.consensus_tol * np.sqrt(config.power_budget)
    trace: List[dict] = []
    converged = False
    resid = float(np.linalg.norm(Y - A @ D))
    T = _selection(m_t, S, opts.use_i2s)
    for t in range(1, opts.max_inner + 1):
        cache = build_cache(al.effective, w, channels, config, grid, radar=radar)
        prob = build_y_subproblem(al, wm, cache, w, config, channels, A @ D, opts)
        x0 = _vec(al.effective) if T is None else _vec(al.effective)[m_t:]
        sol = qcqp.solve(prob, tol=opts.solver_tol, x0=x0,
                         extra0=np.array([_eta_start(al.effective, wm, channels, config,
                                                     opts.bound_form)]))
        if sol.status is qcqp.Status.INFEASIBLE:
            raise InfeasibleSubproblem(f"convex step infeasible at inner iteration {t}")
        if sol.status is qcqp.Status.NUMERICAL_FAILURE:
            log.warning("convex step numerical failure at inner iteration %d", t)
            break
        x = sol.x if T is None else np.concatenate([np.zeros(m_t, dtype=complex), sol.x])
        Y_new = _unvec(x, m_t)
        eta_new = float(sol.extra[0])
        target = Y_new + al.dual
        if not opts.fully_digital:
            A = update_analog_bcd(target, A, D, sweeps=opts.bcd_sweeps)
        D = update_digital(target, A)
        if not opts.use_i2s:
            D[:, 0] = 0.0
        wm = wmmse_update(Y_new, channels, config)
        d_eta = abs(eta_new - al.eta)
        al.effective, al.eta, al.inner_iteration = Y_new, eta_new, t
        al.dual = update_dual(al, A, D)
        al.penalty *= opts.penalty_growth
        resid = float(np.linalg.norm(Y_new - A @ D))
        trace.append(_trace_row(outer_iter, t, eta_new, A @ D, w, channels, config, grid,
                                resid))
        if resid <= tol_res and d_eta <= opts.eta_tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"inner loop hit {opts.max_inner} iterations", MaxInnerIterations,
                      stacklevel=2)
    D_admm = D.copy()
    D = polish_digital(A, D, w, channels, config, grid, opts)
    D, slack = rescale_power(A, D, w, channels, config, grid, opts)
    bf = BeamformerSet.from_digital(A, D)
    return InnerResult(beamformers=bf, al=al, wmmse=wm, trace=trace, converged=converged,
                       power_slack=slack, consensus_residual=resid, admm_digital=D_admm)


def _trace_row(outer_iter, inner_iter, eta, effective, w, channels, config, grid, resid):
    sinr = lue_sinrs_effective(channels.lue, effective, config.noise_user)
    eue = rate(eue_sinrs_effective(channels.eue_samples, effective, config.noise_eue))
    radar = radar_sinrs_effective(w, effective, grid, config)
    return {
        "outer_iter": outer_iter,
        "inner_iter": inner_iter,
        "eta": eta,
        "worst_case_sr": worst_case_sr(rate(sinr), eue),
        "min_radar_sinr": float(np.min(radar)),
        "consensus_residual": resid,
        "max_eue_rate": float(np.max(eue)),
    }
