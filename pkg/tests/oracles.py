"""Reference implementations written independently of the package code.

Each oracle evaluates a defining formula directly (scalar loops, quadrature,
brute-force search) so that agreement with the vectorized package code is
meaningful.
"""
import cmath
import math

import numpy as np
from scipy import integrate, optimize, special


def steering_scalar(theta_deg, m, spacing=0.5):
    s = math.sin(math.radians(theta_deg))
    return np.array([cmath.exp(2j * math.pi * spacing * k * s) for k in range(m)])


def lue_sinr_loop(u, H, A, Dc, dI, noise):
    h = H[:, u]
    sig = abs(h.conj() @ A @ Dc[:, u]) ** 2
    interf = 0.0
    for i in range(Dc.shape[1]):
        if i != u:
            interf += abs(h.conj() @ A @ Dc[:, i]) ** 2
    interf += abs(h.conj() @ A @ dI) ** 2
    return sig / (interf + noise)


def eue_sinr_loop(u, he, A, Dc, dI, noise):
    return abs(he.conj() @ A @ Dc[:, u]) ** 2 / (abs(he.conj() @ A @ dI) ** 2 + noise)


def radar_sinr_loop(w, Y, theta, clutter_angles, clutter_amps, target_amp, noise,
                    m_t, m_r, spacing=0.5):
    def chan(t):
        return np.outer(steering_scalar(t, m_r, spacing), steering_scalar(t, m_t, spacing).conj())

    num = 0.0
    for j in range(Y.shape[1]):
        num += abs(target_amp) ** 2 * abs(w.conj() @ chan(theta) @ Y[:, j]) ** 2
    den = noise * float(np.vdot(w, w).real)
    for ang, amp in zip(clutter_angles, clutter_amps):
        for j in range(Y.shape[1]):
            den += abs(amp) ** 2 * abs(w.conj() @ chan(ang) @ Y[:, j]) ** 2
    return num / den


def marcum_q1_quad(a, b):
    """Q_1(a, b) = int_b^inf x exp(-(x^2 + a^2)/2) I_0(a x) dx by adaptive quadrature."""
    if b == 0:
        return 1.0

    def f(x):
        # exp(-(x^2+a^2)/2) I0(ax) = exp(-(x-a)^2/2) i0e(ax)
        return x * math.exp(-0.5 * (x - a) ** 2) * special.i0e(a * x)

    hi = max(a, b) + 40.0
    pts = [p for p in (a,) if b < p < hi]
    val, _ = integrate.quad(f, b, hi, points=pts or None, epsabs=1e-15, epsrel=1e-13,
                            limit=500)
    return val


def trust_region(Q, b, radius):
    """argmin x^H Q x + 2 Re(b^H x) s.t. ||x|| <= radius, Q Hermitian PSD.

    Eigendecomposition plus scalar root finding on the secular equation.
    """
    lam, V = np.linalg.eigh(Q)
    beta = V.conj().T @ b

    def x_of(mu):
        return -V @ (beta / (lam + mu))

    if lam[0] > 1e-12:
        x0 = x_of(0.0)
        if np.linalg.norm(x0) <= radius:
            return x0

    def phi(mu):
        return np.linalg.norm(beta / (lam + mu)) - radius

    lo = max(0.0, -lam[0]) + 1e-14
    hi = lo + 1.0
    while phi(hi) > 0:
        hi *= 2.0
    mu = optimize.brentq(phi, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    return x_of(mu)


def bcd_phase_grid(T, A, D, points=3600):
    """One sweep of element-wise BCD with each phase chosen by exhaustive grid search."""
    A = A.copy()
    phases = np.exp(1j * 2 * np.pi * np.arange(points) / points)
    for j in range(A.shape[1]):
        for i in range(A.shape[0]):
            best, best_val = None, np.inf
            for p in phases:
                A[i, j] = p
                val = np.linalg.norm(T - A @ D) ** 2
                if val < best_val:
                    best, best_val = p, val
            A[i, j] = best
    return A


def wmmse_mse(h, Y, u, kappa, noise):
    """epsilon_u from its definition with explicit sums."""
    total = sum(abs(h.conj() @ Y[:, j]) ** 2 for j in range(Y.shape[1])) + noise
    return abs(kappa) ** 2 * total - 2 * (kappa * (h.conj() @ Y[:, u + 1])).real + 1.0
