"""Convex QCQP over complex vectors, solved by a primal-dual interior-point method.

Every function has the form

    x^H Q x + 2 Re(b^H x) + c + e^T diag(extra_quad) e + extra_lin^T e

where ``x`` is complex of dimension ``n`` and ``e`` holds ``p`` real extra
variables (epigraph variables and the like).  Constraints read ``f_i <= 0``.
The problem is mapped onto real variables ``v = [Re x, Im x, e]``.  Each
quadratic constraint ``||F^T v||^2 + a(v) <= 0`` (``F F^T`` the real Hessian
block) becomes a second-order cone and the cone program is solved with
Nesterov-Todd scaling and Mehrotra correction.  Quadratic blocks may be
supplied as factors ``Q = F F^H`` to skip the eigendecomposition.
"""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)

PSD_CLIP = 1e-9
PSD_REJECT = 1e-6
STEP_FRACTION = 0.99
REFINE_STEPS = 1
POLISH_STEPS = 5


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


class NonConvexError(ValueError):
    """A quadratic block has an eigenvalue below -PSD_REJECT."""


@dataclass
class QuadForm:
    """One quadratic function; ``factor`` (n x k, quad = factor factor^H) may replace ``quad``."""

    quad: Optional[np.ndarray] = None
    lin: Optional[np.ndarray] = None
    const: float = 0.0
    extra_lin: Optional[np.ndarray] = None
    extra_quad: Optional[np.ndarray] = None
    factor: Optional[np.ndarray] = None

    def quad_matrix(self) -> Optional[np.ndarray]:
        if self.quad is not None:
            return np.asarray(self.quad)
        if self.factor is not None:
            F = np.asarray(self.factor)
            return F @ F.conj().T
        return None

    def value(self, x, extra=None) -> float:
        x = np.asarray(x, dtype=complex)
        out = float(self.const)
        if self.quad is not None:
            out += float(np.real(np.vdot(x, np.asarray(self.quad) @ x)))
        elif self.factor is not None:
            out += float(np.sum(np.abs(np.asarray(self.factor).conj().T @ x) ** 2))
        if self.lin is not None:
            out += 2.0 * float(np.real(np.vdot(self.lin, x)))
        if extra is not None:
            extra = np.asarray(extra, dtype=float)
            if self.extra_lin is not None:
                out += float(self.extra_lin @ extra)
            if self.extra_quad is not None:
                out += float(self.extra_quad @ extra ** 2)
        return out


@dataclass
class QcqpProblem:
    dimension: int
    objective: QuadForm
    constraints: List[QuadForm] = field(default_factory=list)
    num_extra: int = 0

    @property
    def num_real(self) -> int:
        return 2 * self.dimension + self.num_extra


@dataclass
class QcqpSolution:
    x: np.ndarray
    extra: np.ndarray
    status: Status
    objective_value: float
    max_constraint_violation: float
    kkt_residual: float
    multipliers: np.ndarray
    iterations: int = 0
    trace: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL


# -- real embedding ---------------------------------------------------------

def embed_vector(x, extra=None) -> np.ndarray:
    x = np.asarray(x, dtype=complex).reshape(-1)
    parts = [x.real, x.imag]
    if extra is not None:
        parts.append(np.asarray(extra, dtype=float).reshape(-1))
    return np.concatenate(parts)


def recover_vector(v, n: int):
    v = np.asarray(v, dtype=float)
    return v[:n] + 1j * v[n:2 * n], v[2 * n:].copy()


def _psd_factor(q: np.ndarray) -> np.ndarray:
    """F with F F^H = q after symmetrizing and clipping tiny negative eigenvalues."""
    q = 0.5 * (q + q.conj().T)
    scale = max(1.0, float(np.max(np.abs(q))))
    vals, vecs = np.linalg.eigh(q)
    if vals[0] < -PSD_REJECT * scale:
        raise NonConvexError(f"quadratic block has eigenvalue {vals[0]:.3e}")
    keep = vals > PSD_CLIP * 1e-5 * scale
    return vecs[:, keep] * np.sqrt(vals[keep])


@dataclass
class _RealForm:
    F: np.ndarray  # (N, k); Hessian block is F F^T
    q: np.ndarray  # (N,)
    r: float

    def value(self, v) -> float:
        Fv = self.F.T @ v
        return float(Fv @ Fv + 2.0 * (self.q @ v) + self.r)


def _embed_form(form: QuadForm, n: int, p: int) -> _RealForm:
    size = 2 * n + p
    cols = []
    if form.factor is not None:
        Fc = np.asarray(form.factor, dtype=complex).reshape(n, -1)
    elif form.quad is not None:
        Fc = _psd_factor(np.asarray(form.quad, dtype=complex))
    else:
        Fc = np.zeros((n, 0), dtype=complex)
    k = Fc.shape[1]
    if k:
        blk = np.zeros((size, 2 * k))
        blk[:n, :k] = Fc.real
        blk[:n, k:] = -Fc.imag
        blk[n:2 * n, :k] = Fc.imag
        blk[n:2 * n, k:] = Fc.real
        cols.append(blk)
    q = np.zeros(size)
    if form.lin is not None:
        b = np.asarray(form.lin, dtype=complex)
        q[:n] = b.real
        q[n:2 * n] = b.imag
    if p and form.extra_quad is not None:
        eq = np.asarray(form.extra_quad, dtype=float)
        if np.any(eq < 0):
            raise NonConvexError("extra_quad must be nonnegative")
        nz = np.flatnonzero(eq)
        blk = np.zeros((size, len(nz)))
        blk[2 * n + nz, np.arange(len(nz))] = np.sqrt(eq[nz])
        cols.append(blk)
    if p and form.extra_lin is not None:
        q[2 * n:] = 0.5 * np.asarray(form.extra_lin, dtype=float)
    F = np.hstack(cols) if cols else np.zeros((size, 0))
    out = _RealForm(F=F, q=q, r=float(form.const))
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(q)) and np.isfinite(out.r)):
        raise ValueError("non-finite problem coefficients")
    return out


def _real_forms(problem: QcqpProblem) -> List[_RealForm]:
    n, p = problem.dimension, problem.num_extra
    return [_embed_form(f, n, p) for f in [problem.objective] + list(problem.constraints)]


def to_real(problem: QcqpProblem):
    """Dense stack f_i(v) = v^T P_i v + 2 q_i^T v + r_i, objective first."""
    forms = _real_forms(problem)
    P = np.stack([f.F @ f.F.T for f in forms])
    q = np.stack([f.q for f in forms])
    r = np.array([f.r for f in forms])
    return P, q, r


def _eval_forms(forms: List[_RealForm], v) -> Tuple[np.ndarray, np.ndarray]:
    f = np.empty(len(forms))
    grad = np.empty((len(forms), len(v)))
    for i, form in enumerate(forms):
        Fv = form.F.T @ v
        f[i] = Fv @ Fv + 2.0 * (form.q @ v) + form.r
        grad[i] = 2.0 * (form.F @ Fv + form.q)
    return f, grad


# -- cone program -------------------------------------------------------------
# minimize 1/2 v^T P v + c^T v  s.t.  G v + s = h,  s in orthant x SOC x ... x SOC

@dataclass
class _Cones:
    """Orthant of dimension ``l`` followed by second-order cones of sizes ``soc``.

    Block-wise reductions on the cone part use ``np.add.reduceat`` so each
    operation costs a fixed number of array calls whatever the block count.
    """

    l: int
    soc: List[int]

    def __post_init__(self):
        sizes = np.asarray(self.soc, dtype=int)
        self.rel_starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int) \
            if len(sizes) else np.zeros(0, dtype=int)
        self.heads = self.l + self.rel_starts
        self.block_id = np.repeat(np.arange(len(sizes)), sizes)
        self.jsign = -np.ones(int(sizes.sum()))
        self.jsign[self.rel_starts] = 1.0
        self.tail = self.jsign < 0

    @property
    def degree(self) -> int:
        return self.l + len(self.soc)

    @property
    def size(self) -> int:
        return self.l + sum(self.soc)

    def bsum(self, a: np.ndarray) -> np.ndarray:
        """Per-block sums over the cone part (leading axis)."""
        return np.add.reduceat(a, self.rel_starts, axis=0)

    def spread(self, per_block: np.ndarray) -> np.ndarray:
        return per_block[self.block_id]


@dataclass
class _ConeMap:
    kind: str  # "lin" or "soc"
    row: int
    c: float = 1.0


def _build_cone_program(cons: List[_RealForm], size: int):
    lin = [i for i, f in enumerate(cons) if f.F.shape[1] == 0]
    quad = [i for i, f in enumerate(cons) if f.F.shape[1] > 0]
    rows_G, rows_h, maps = [], [], [None] * len(cons)
    for j, i in enumerate(lin):
        rows_G.append(2.0 * cons[i].q[None, :])
        rows_h.append(np.array([-cons[i].r]))
        maps[i] = _ConeMap("lin", j)
    socs = []
    row = len(lin)
    for i in quad:
        f = cons[i]
        # ||F^T v||^2 <= -a with a = 2 q^T v + r, as ((c - a/c)/2, (c + a/c)/2, F^T v) in SOC
        c = float(np.sqrt(max(1.0, abs(f.r))))
        k = f.F.shape[1]
        Gi = np.zeros((k + 2, size))
        hi = np.zeros(k + 2)
        Gi[0] = f.q / c
        hi[0] = 0.5 * c - 0.5 * f.r / c
        Gi[1] = -f.q / c
        hi[1] = 0.5 * c + 0.5 * f.r / c
        Gi[2:] = -f.F.T
        rows_G.append(Gi)
        rows_h.append(hi)
        maps[i] = _ConeMap("soc", row, c)
        socs.append(k + 2)
        row += k + 2
    G = np.vstack(rows_G) if rows_G else np.zeros((0, size))
    h = np.concatenate(rows_h) if rows_h else np.zeros(0)
    return G, h, _Cones(len(lin), socs), maps


def _multipliers(z: np.ndarray, maps: List[_ConeMap]) -> np.ndarray:
    lam = np.empty(len(maps))
    for i, mp in enumerate(maps):
        if mp.kind == "lin":
            lam[i] = z[mp.row]
        else:
            lam[i] = (z[mp.row] - z[mp.row + 1]) / (2.0 * mp.c)
    return lam


def _det(c: _Cones, x: np.ndarray) -> np.ndarray:
    """x0^2 - ||x1||^2 per block, for the cone part ``x`` of a vector."""
    x0 = x[c.rel_starts]
    n1 = np.sqrt(c.bsum(np.where(c.tail, x * x, 0.0)))
    return (x0 - n1) * (x0 + n1)


def _min_eig(u: np.ndarray, cones: _Cones) -> float:
    vals = [float(np.min(u[:cones.l]))] if cones.l else []
    if cones.soc:
        x = u[cones.l:]
        n1 = np.sqrt(cones.bsum(np.where(cones.tail, x * x, 0.0)))
        vals.append(float(np.min(x[cones.rel_starts] - n1)))
    return min(vals) if vals else np.inf


def _interior(u, cones: _Cones) -> bool:
    if cones.l and not np.all(u[:cones.l] > 0):
        return False
    if cones.soc:
        x = u[cones.l:]
        return bool(np.all(x[cones.rel_starts] > 0) and np.all(_det(cones, x) > 0))
    return True


def _identity(cones: _Cones) -> np.ndarray:
    e = np.zeros(cones.size)
    e[:cones.l] = 1.0
    e[cones.heads] = 1.0
    return e


def _jprod(u, v, cones: _Cones) -> np.ndarray:
    out = np.empty_like(u)
    l = cones.l
    out[:l] = u[:l] * v[:l]
    if cones.soc:
        x, y = u[l:], v[l:]
        r = cones.spread(x[cones.rel_starts]) * y + cones.spread(y[cones.rel_starts]) * x
        r[cones.rel_starts] = cones.bsum(x * y)
        out[l:] = r
    return out


def _jdiv(lam, v, cones: _Cones) -> np.ndarray:
    """u with lam o u = v."""
    out = np.empty_like(v)
    l = cones.l
    out[:l] = v[:l] / lam[:l]
    if cones.soc:
        x, y = lam[l:], v[l:]
        x0, y0 = x[cones.rel_starts], y[cones.rel_starts]
        u0 = (2.0 * x0 * y0 - cones.bsum(x * y)) / _det(cones, x)
        r = (y - cones.spread(u0) * x) / cones.spread(x0)
        r[cones.rel_starts] = u0
        out[l:] = r
    return out


@dataclass
class _Scaling:
    d: np.ndarray  # orthant part
    beta: np.ndarray  # per second-order block
    vec: np.ndarray  # concatenated scaling vectors v of the blocks


def _nt_scaling(s, z, cones: _Cones) -> _Scaling:
    l = cones.l
    d = np.sqrt(s[:l] / z[:l])
    if not cones.soc:
        return _Scaling(d, np.zeros(0), np.zeros(0))
    sc, zc = s[l:], z[l:]
    sn, zn = np.sqrt(_det(cones, sc)), np.sqrt(_det(cones, zc))
    sbar, zbar = sc / cones.spread(sn), zc / cones.spread(zn)
    gamma = np.sqrt(0.5 * (1.0 + cones.bsum(sbar * zbar)))
    wbar = (sbar + cones.jsign * zbar) / cones.spread(2.0 * gamma)
    w0 = wbar[cones.rel_starts]
    vec = wbar.copy()
    vec[cones.rel_starts] += 1.0
    vec /= cones.spread(np.sqrt(2.0 * (w0 + 1.0)))
    return _Scaling(d, np.sqrt(sn / zn), vec)


def _apply_w(W: _Scaling, u: np.ndarray, cones: _Cones, inverse: bool = False) -> np.ndarray:
    """W u or W^{-1} u; ``u`` is a vector or a matrix whose rows follow the cones.

    On each second-order block W = beta (2 v v^T - J) and
    W^{-1} = (2 J v v^T J - J) / beta, so that W z = W^{-1} s.
    """
    out = np.empty_like(u)
    l = cones.l
    tail_shape = (1,) * (u.ndim - 1)
    dd = (1.0 / W.d) if inverse else W.d
    out[:l] = dd.reshape((-1,) + tail_shape) * u[:l]
    if cones.soc:
        x = u[l:]
        vec = cones.jsign * W.vec if inverse else W.vec
        scale = 1.0 / W.beta if inverse else W.beta
        vcol = vec.reshape((-1,) + tail_shape)
        jcol = cones.jsign.reshape((-1,) + tail_shape)
        proj = cones.spread(cones.bsum(vcol * x))
        out[l:] = cones.spread(scale).reshape((-1,) + tail_shape) * (2.0 * vcol * proj - jcol * x)
    return out


def _max_step(u, du, cones: _Cones) -> float:
    """Largest a with u + a du in the cone, for interior u."""
    best = np.inf
    l = cones.l
    if l:
        neg = du[:l] < 0
        if np.any(neg):
            best = float(np.min(-u[:l][neg] / du[:l][neg]))
    if not cones.soc:
        return best
    x, d = u[l:], du[l:]
    x0, d0 = x[cones.rel_starts], d[cones.rel_starts]
    A = cones.bsum(cones.jsign * d * d)
    B = cones.bsum(cones.jsign * x * d)
    C = _det(cones, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        cands = [np.where(d0 < 0, -x0 / d0, np.inf)]
        disc = B * B - A * C
        qq = -(B + np.copysign(np.sqrt(np.maximum(disc, 0.0)), B))
        ok = (disc >= 0) & (qq != 0) & (np.abs(A) > 1e-300)
        cands.append(np.where(ok, qq / A, np.inf))
        cands.append(np.where(ok, C / qq, np.inf))
        lin = (np.abs(A) <= 1e-300) & (B < 0)
        cands.append(np.where(lin, -C / (2.0 * B), np.inf))
    allc = np.concatenate(cands)
    allc = allc[allc > 0]
    if len(allc):
        best = min(best, float(np.min(allc)))
    return best


def _chol_solve(L, b):
    y = scipy.linalg.solve_triangular(L, b, lower=True, check_finite=False)
    return scipy.linalg.solve_triangular(L.T, y, lower=False, check_finite=False)


def _factor_psd(K):
    """Cholesky factor with a tiny diagonal shift if K is numerically singular."""
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        shift = 1e-12 * max(1.0, float(np.max(np.abs(np.diag(K)))))
        return np.linalg.cholesky(K + shift * np.eye(K.shape[0]))


def _cone_solve(P, c, G, h, cones: _Cones, tol, max_iter, trace, phase):
    """Returns (v, s, z, status)."""
    e = _identity(cones)
    try:
        L0 = _factor_psd(P + G.T @ G)
    except np.linalg.LinAlgError:
        return np.zeros(len(c)), e, e, Status.NUMERICAL_FAILURE
    v = _chol_solve(L0, -c + G.T @ h)
    s = h - G @ v
    z = G @ v - h
    for u in (s, z):
        a = _min_eig(u, cones)
        if a < 1e-8 * max(1.0, float(np.max(np.abs(u)))):
            u += (1.0 - a) * e
    stalls = 0
    hscale = max(1.0, float(np.max(np.abs(h), initial=0.0)))
    cscale = max(1.0, float(np.max(np.abs(c), initial=0.0)))
    for it in range(max_iter):
        rx = P @ v + c + G.T @ z
        rz = G @ v + s - h
        gap = float(s @ z)
        pres = float(np.max(np.abs(rz)))
        dres = float(np.max(np.abs(rx)))
        obj = float(0.5 * v @ P @ v + c @ v)
        if pres <= tol * hscale and dres <= tol * cscale and gap <= tol * max(1.0, abs(obj)):
            return v, s, z, Status.OPTIMAL
        W = _nt_scaling(s, z, cones)
        lam = _apply_w(W, z, cones)
        Gs = _apply_w(W, G, cones, inverse=True)
        try:
            L = _factor_psd(P + Gs.T @ Gs)
        except np.linalg.LinAlgError:
            return v, s, z, Status.NUMERICAL_FAILURE

        def reduced(bx, bz, bs):
            u = _jdiv(lam, bs, cones)
            t = u - _apply_w(W, bz, cones, inverse=True)
            dv = _chol_solve(L, bx - Gs.T @ t)
            dz = _apply_w(W, Gs @ dv + t, cones, inverse=True)
            ds = _apply_w(W, u - _apply_w(W, dz, cones), cones)
            return dv, ds, dz

        def newton(bs):
            # one round of iterative refinement on the unreduced system
            bx, bz = -rx, -rz
            dv, ds, dz = reduced(bx, bz, bs)
            for _ in range(REFINE_STEPS):
                ex = bx - P @ dv - G.T @ dz
                ez = bz - G @ dv - ds
                es = bs - _jprod(lam, _apply_w(W, ds, cones, inverse=True)
                                 + _apply_w(W, dz, cones), cones)
                cv, cs, cz = reduced(ex, ez, es)
                dv, ds, dz = dv + cv, ds + cs, dz + cz
            return dv, ds, dz

        lam2 = _jprod(lam, lam, cones)
        _, ds_a, dz_a = newton(-lam2)
        a_aff = min(1.0, _max_step(s, ds_a, cones), _max_step(z, dz_a, cones))
        sigma = (1.0 - a_aff) ** 3
        mu = gap / cones.degree
        corr = _jprod(_apply_w(W, ds_a, cones, inverse=True), _apply_w(W, dz_a, cones), cones)
        dv, ds, dz = newton(-lam2 - corr + sigma * mu * e)
        if not (np.all(np.isfinite(dv)) and np.all(np.isfinite(ds)) and np.all(np.isfinite(dz))):
            return v, s, z, Status.NUMERICAL_FAILURE
        step = min(1.0, STEP_FRACTION * min(_max_step(s, ds, cones), _max_step(z, dz, cones)))
        while step > 1e-12 and not (_interior(s + step * ds, cones)
                                     and _interior(z + step * dz, cones)):
            step *= 0.5
        merit = max(pres, dres)
        v, s, z = v + step * dv, s + step * ds, z + step * dz
        trace.append({"phase": phase, "iter": it, "gap": gap, "primal_residual": pres,
                      "dual_residual": dres, "sigma": sigma, "step": step,
                      "merit_before": merit, "merit_after": (1.0 - step) * merit,
                      "objective": float(0.5 * v @ P @ v + c @ v)})
        stalls = stalls + 1 if step < 1e-10 else 0
        if stalls >= 5:
            return v, s, z, Status.NUMERICAL_FAILURE
    return v, s, z, Status.ITERATION_LIMIT


# -- driver -------------------------------------------------------------------

def _constraint_scale(f: _RealForm) -> float:
    curv = float(np.linalg.norm(f.F, 2)) ** 2 if f.F.shape[1] else 0.0
    scale = max(curv, 2.0 * float(np.max(np.abs(f.q), initial=0.0)))
    return scale if scale > 0 else 1.0


def _run(obj: _RealForm, cons: List[_RealForm], tol, max_iter, trace, phase):
    # normalize each constraint so its curvature or gradient is of order one
    scales = np.array([_constraint_scale(f) for f in cons])
    normed = [_RealForm(f.F / np.sqrt(sc), f.q / sc, f.r / sc) for f, sc in zip(cons, scales)]
    G, h, cones, maps = _build_cone_program(normed, len(obj.q))
    P = 2.0 * (obj.F @ obj.F.T)
    v, s, z, status = _cone_solve(P, 2.0 * obj.q, G, h, cones, tol, max_iter, trace, phase)
    return v, _multipliers(z, maps) / scales, status


def _phase_one(cons: List[_RealForm], v0, tol, max_iter, trace):
    """min tau s.t. f_i(v) <= tau, tau >= -floor, ||v - v0||^2 <= 1e4 (1 + ||v0||^2)."""
    size = len(v0)
    floor = 1.0 + abs(max(f.value(v0) for f in cons))
    radius2 = 1e4 * (1.0 + float(v0 @ v0))

    def lift(f: _RealForm) -> _RealForm:
        F = np.vstack([f.F, np.zeros((1, f.F.shape[1]))])
        return _RealForm(F, np.append(f.q, -0.5), f.r)

    aux = [lift(f) for f in cons]
    aux.append(_RealForm(np.zeros((size + 1, 0)), np.append(np.zeros(size), -0.5), -floor))
    ball = np.vstack([np.eye(size), np.zeros((1, size))])
    aux.append(_RealForm(ball, np.append(-v0, 0.0), float(v0 @ v0) - radius2))
    obj = _RealForm(np.zeros((size + 1, 0)), np.append(np.zeros(size), 0.5), 0.0)
    v, _, status = _run(obj, aux, tol, max_iter, trace, "phase1")
    return v[:-1], float(v[-1]), status


def solve(problem: QcqpProblem, tol: float = 1e-9, max_iter: int = 100,
          x0=None, extra0=None) -> QcqpSolution:
    """Solve a convex QCQP.

    ``x0``/``extra0`` centre the auxiliary feasibility problem that runs when
    the main solve fails; the interior-point start itself is computed.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    n, p = problem.dimension, problem.num_extra
    forms = _real_forms(problem)
    obj, cons = forms[0], forms[1:]
    m = len(cons)
    trace: list = []
    if m == 0:
        H = 2.0 * (obj.F @ obj.F.T)
        v = np.linalg.lstsq(H, -2.0 * obj.q, rcond=None)[0]
        resid = float(np.max(np.abs(H @ v + 2.0 * obj.q))) if len(v) else 0.0
        status = Status.OPTIMAL if resid <= 1e3 * tol * (1.0 + np.max(np.abs(obj.q), initial=0.0)) \
            else Status.NUMERICAL_FAILURE
        return _package(problem, forms, v, np.zeros(0), status, 0, trace)
    v, lam, status = _run(obj, cons, tol, max_iter, trace, "phase2")
    if status == Status.OPTIMAL:
        lam = _refine_multipliers(forms, v, lam)
        v, lam = _polish(forms, v, lam)
    if status != Status.OPTIMAL:
        v0 = embed_vector(np.zeros(n) if x0 is None else x0,
                          (np.zeros(p) if extra0 is None else extra0) if p else None)
        _, tau, st1 = _phase_one(cons, v0, tol, max_iter, trace)
        if st1 == Status.OPTIMAL and tau >= -tol:
            return _package(problem, forms, v, np.zeros(m), Status.INFEASIBLE, len(trace), trace)
        log.debug("main solve ended with %s; feasibility problem %s, tau=%.3e",
                  status.value, st1.value, tau)
    return _package(problem, forms, v, lam, status, len(trace), trace)


def _refine_multipliers(forms, v, lam):
    """Least-squares multipliers on the active set identified by the cone solve.

    Interior-point multipliers satisfy stationarity only to the accuracy of the
    final duality gap; re-fitting them at the returned point removes that error.
    """
    f, grad = _eval_forms(forms, v)
    sc = np.array([_constraint_scale(fm) for fm in forms[1:]])
    active = np.flatnonzero(lam * sc > np.abs(f[1:]) / sc)
    if len(active) == 0:
        return lam
    fitted = lam.copy()
    fitted[active] = np.linalg.lstsq(grad[1 + active].T, -grad[0], rcond=None)[0]
    fitted = np.maximum(fitted, 0.0)
    before = _kkt_parts(forms, v, lam)[0]
    after = _kkt_parts(forms, v, fitted)[0]
    return fitted if after < before else lam


def _newton_active(forms, hess, sc, v, lam, active, steps):
    """Newton's method on the KKT equations with ``active`` held as equalities."""
    n, k = len(v), len(active)
    vn, la = v.copy(), lam[active].copy()
    best = (np.inf, vn, la)
    for _ in range(steps + 1):
        f, grad = _eval_forms(forms, vn)
        rhs = np.concatenate([grad[0] + grad[1 + active].T @ la, f[1 + active]])
        norm = float(np.linalg.norm(rhs))
        if not norm < best[0]:
            break
        best = (norm, vn, la)
        H = hess[0] + sum(l * hess[1 + i] for l, i in zip(la, active))
        K = np.zeros((n + k, n + k))
        K[:n, :n] = H
        K[:n, n:] = grad[1 + active].T
        K[n:, :n] = grad[1 + active]
        step = np.linalg.lstsq(K, -rhs, rcond=None)[0]
        vn, la = vn + step[:n], la + step[n:]
        if not (np.all(np.isfinite(vn)) and np.all(np.isfinite(la))):
            break
    _, vn, la = best
    # multipliers of weakly active constraints may land a rounding error below zero
    if np.any(la * sc[active] < -1e-10 * max(1.0, float(np.max(np.abs(la * sc[active]))))):
        return None
    if np.any(_eval_forms(forms, vn)[0][1:] / sc > 1e-13):
        return None
    lam_new = np.zeros_like(lam)
    lam_new[active] = np.maximum(la, 0.0)
    return vn, lam_new


def _polish(forms, v, lam, steps: int = POLISH_STEPS):
    """Newton steps on the KKT equations of the active set found by the cone solve.

    Interior-point iterates stop at a duality gap of order ``tol``, which leaves
    an error of order sqrt(tol) along the boundary of curved constraints.
    Treating the active constraints as equalities removes it.  Constraints are
    ranked by scaled multiplier and a few leading subsets are tried, since a
    weakly active constraint is hard to classify from the interior; a result
    is kept only if it is feasible, has nonnegative multipliers and lowers the
    KKT residual.
    """
    f, _ = _eval_forms(forms, v)
    sc = np.array([_constraint_scale(fm) for fm in forms[1:]])
    weight = lam * sc
    order = np.argsort(-weight)
    guess = int(np.sum(weight > np.abs(f[1:]) / sc))
    limit = min(len(v), int(np.sum(weight > 0)))
    sizes = sorted({j for j in range(max(1, guess - 1), guess + 3) if j <= limit})
    if not sizes:
        return v, lam
    hess = [2.0 * (fm.F @ fm.F.T) for fm in forms]
    best_kkt, best = _kkt_parts(forms, v, lam)[0], (v, lam)
    for j in sizes:
        cand = _newton_active(forms, hess, sc, v, lam, order[:j], steps)
        if cand is None:
            continue
        kkt = _kkt_parts(forms, *cand)[0]
        if kkt < best_kkt:
            best_kkt, best = kkt, cand
        if best_kkt <= 1e-12:
            break
    return best


def _kkt_parts(forms, v, lam):
    """(scaled KKT residual, raw max violation, function values).

    Constraints are normalized as in the solver and the objective terms are
    measured relative to the objective's own size, so the residual does not
    depend on how the data happen to be scaled.  It is zero only at an exact
    KKT point.
    """
    f, grad = _eval_forms(forms, v)
    gscale = 1.0 + float(np.max(np.abs(grad[0]), initial=0.0))
    fscale = 1.0 + abs(float(f[0]))
    if len(lam):
        sc = np.array([_constraint_scale(fm) for fm in forms[1:]])
        g, mu = f[1:] / sc, lam * sc
        stat = float(np.max(np.abs(grad[0] + grad[1:].T @ lam))) / gscale
        comp = float(np.max(np.abs(mu * g))) / fscale
        viol = float(max(0.0, np.max(g)))
        dual = float(max(0.0, -np.min(mu))) / gscale
        raw = float(max(0.0, np.max(f[1:])))
    else:
        stat = float(np.max(np.abs(grad[0]), initial=0.0)) / gscale
        comp = viol = dual = raw = 0.0
    return max(stat, comp, viol, dual), raw, f


def _package(problem, forms, v, lam, status, iterations, trace) -> QcqpSolution:
    kkt, viol, f = _kkt_parts(forms, v, lam)
    x, extra = recover_vector(v, problem.dimension)
    return QcqpSolution(
        x=x, extra=extra, status=status, objective_value=float(f[0]),
        max_constraint_violation=viol, kkt_residual=kkt,
        multipliers=np.asarray(lam, dtype=float), iterations=iterations, trace=trace)


def kkt_residual(problem: QcqpProblem, solution: QcqpSolution) -> float:
    """Max of scaled stationarity, feasibility, dual feasibility and complementarity."""
    forms = _real_forms(problem)
    v = embed_vector(solution.x, solution.extra if problem.num_extra else None)
    lam = np.asarray(solution.multipliers, dtype=float)
    if len(lam) != len(problem.constraints):
        lam = np.zeros(len(problem.constraints))
    return _kkt_parts(forms, v, lam)[0]


def dump_problem(problem: QcqpProblem, path) -> None:
    """Write a problem instance as JSON, complex entries as [re, im] pairs."""
    def enc(a):
        if a is None:
            return None
        a = np.asarray(a)
        if np.iscomplexobj(a):
            return {"shape": list(a.shape),
                    "data": np.stack([a.real, a.imag], axis=-1).tolist()}
        return {"shape": list(a.shape), "data": a.tolist()}

    def form(f: QuadForm):
        return {"quad": enc(f.quad_matrix()), "lin": enc(f.lin), "const": float(f.const),
                "extra_lin": enc(f.extra_lin), "extra_quad": enc(f.extra_quad)}

    doc = {"dimension": problem.dimension, "num_extra": problem.num_extra,
           "objective": form(problem.objective),
           "constraints": [form(c) for c in problem.constraints]}
    with open(path, "w") as fh:
        json.dump(doc, fh)
