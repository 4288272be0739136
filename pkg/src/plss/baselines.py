"""Golub-Kahan bidiagonalization baselines: Craig's method and LSQR.

No reorthogonalization is performed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .common import (
    BREAKDOWN_Y_VANISHED,
    CONVERGED,
    ITERATION_LIMIT,
    Callback,
    Monitor,
    SolveReport,
    SolverConfig,
)
from .linalg import SparseMatrix, as_sparse, check_vector


@dataclass
class BidiagState:
    """Step ``k`` of the bidiagonalization.

    ``beta`` couples ``u_k`` to the previous vectors (``beta_1 = ||b||``),
    ``alpha`` is the diagonal entry ``alpha_k``. ``beta_next`` and
    ``u_next`` hold ``beta_{k+1} u_{k+1} = A v_k - alpha_k u_k`` once
    ``advance_u`` has been called.
    """

    k: int
    u: np.ndarray
    v: np.ndarray
    alpha: float
    beta: float
    beta_next: float = math.nan
    u_next: Optional[np.ndarray] = None


def bidiag_start(A: SparseMatrix, b) -> BidiagState:
    """``beta_1 u_1 = b`` and ``alpha_1 v_1 = A^T u_1``."""
    b = np.asarray(b, dtype=np.float64)
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        raise ValueError("bidiagonalization needs b != 0")
    u = b / beta
    v = A.rmatvec(u)
    alpha = float(np.linalg.norm(v))
    if alpha > 0.0:
        v = v / alpha
    return BidiagState(1, u, v, alpha, beta)


def advance_u(state: BidiagState, A: SparseMatrix) -> BidiagState:
    """Compute ``beta_{k+1}`` and ``u_{k+1}`` (first half of a step)."""
    w = A.matvec(state.v) - state.alpha * state.u
    beta = float(np.linalg.norm(w))
    state.beta_next = beta
    state.u_next = w / beta if beta > 0.0 else np.zeros_like(w)
    return state


def bidiag_step(state: BidiagState, A: SparseMatrix) -> BidiagState:
    """Advance to step ``k + 1``.

    A zero ``beta_{k+1}`` (lucky breakdown) leaves ``u``, ``v`` and
    ``alpha`` at zero; callers check ``beta`` and ``alpha``.
    """
    if state.u_next is None:
        advance_u(state, A)
    beta = state.beta_next
    u = state.u_next
    if beta > 0.0:
        z = A.rmatvec(u) - beta * state.v
        alpha = float(np.linalg.norm(z))
        v = z / alpha if alpha > 0.0 else np.zeros_like(z)
    else:
        alpha = 0.0
        v = np.zeros_like(state.v)
    return BidiagState(state.k + 1, u, v, alpha, beta)


def craig_solve(A, b, x0=None, config: Optional[SolverConfig] = None, *,
                callback: Optional[Callback] = None) -> SolveReport:
    """Craig's method for consistent ``A x = b``.

    ``x_k = x_{k-1} + zeta_k v_k`` with ``zeta_k = -(beta_k / alpha_k) zeta_{k-1}``,
    ``zeta_0 = -1``; the residual ``-zeta_k beta_{k+1} u_{k+1}`` gives the
    stopping norm. A nonzero ``x0`` is handled by solving for the correction.
    """
    config = config or SolverConfig()
    A = as_sparse(A)
    b = check_vector(b, A.m, "b")
    mon = Monitor(b, config, callback)
    x = np.zeros(A.n) if x0 is None else check_vector(x0, A.n, "x0").copy()
    r0 = b - A.matvec(x)
    if mon.record(0, float(np.linalg.norm(r0)), x, r0):
        return mon.report(CONVERGED, x, A, b)

    st = bidiag_start(A, r0)
    zeta = -1.0
    for k in range(1, config.max_iters + 1):
        if st.alpha == 0.0:
            return mon.report(BREAKDOWN_Y_VANISHED, x, A, b)
        zeta = -(st.beta / st.alpha) * zeta
        x += zeta * st.v
        advance_u(st, A)
        r = -zeta * st.beta_next * st.u_next if mon.callback else None
        if mon.record(k, abs(zeta) * st.beta_next, x, r):
            return mon.report(CONVERGED, x, A, b)
        st = bidiag_step(st, A)
    return mon.report(ITERATION_LIMIT, x, A, b)


def lsqr_solve(A, b, x0=None, config: Optional[SolverConfig] = None, *,
               callback: Optional[Callback] = None) -> SolveReport:
    """LSQR (Paige and Saunders) without damping.

    The stopping rule is applied to the recurred residual norm ``phibar``,
    which equals ``||b - A x_k||`` in exact arithmetic.
    """
    config = config or SolverConfig()
    A = as_sparse(A)
    b = check_vector(b, A.m, "b")
    mon = Monitor(b, config, callback)
    x = np.zeros(A.n) if x0 is None else check_vector(x0, A.n, "x0").copy()
    r0 = b - A.matvec(x)
    if mon.record(0, float(np.linalg.norm(r0)), x, r0):
        return mon.report(CONVERGED, x, A, b)

    st = bidiag_start(A, r0)
    if st.alpha == 0.0:
        return mon.report(BREAKDOWN_Y_VANISHED, x, A, b)
    w = st.v.copy()
    phibar = st.beta
    rhobar = st.alpha
    for k in range(1, config.max_iters + 1):
        st = bidiag_step(st, A)
        beta, alpha = st.beta, st.alpha
        rho = math.hypot(rhobar, beta)
        c, s = rhobar / rho, beta / rho
        theta = s * alpha
        rhobar = -c * alpha
        phi = c * phibar
        phibar = s * phibar
        x += (phi / rho) * w
        w = st.v - (theta / rho) * w
        if mon.record(k, abs(phibar), x, None):
            return mon.report(CONVERGED, x, A, b)
        if beta == 0.0 or alpha == 0.0:
            # exact subspace exhausted; the iterate is the least-squares solution
            return mon.report(BREAKDOWN_Y_VANISHED, x, A, b)
    return mon.report(ITERATION_LIMIT, x, A, b)
