"""PLSS: short-recursion projected solver with residual sketches.

Each iteration costs one product with ``A`` and one with ``A.T`` and keeps
four live vectors (``x``, ``r``, ``y``, ``p``) plus the scratch ``W y``.
Successive residuals are mutually orthogonal and successive updates are
``W^{-1}``-orthogonal, so in exact arithmetic the iteration stops after at
most ``rank(A)`` steps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .common import (
    BREAKDOWN_STAGNATION,
    BREAKDOWN_Y_VANISHED,
    CONVERGED,
    ITERATION_LIMIT,
    PHI_BREAKDOWN,
    TAU_BREAKDOWN,
    Breakdown,
    Callback,
    Monitor,
    SolveReport,
    SolverConfig,
)
from .linalg import IDENTITY, SparseMatrix, Weight, as_sparse, check_vector

log = logging.getLogger(__name__)


def make_weight(A: SparseMatrix, mode: str = "identity") -> Weight:
    """Build ``W``: identity, or ``diag(1/||A[:, j]||)``.

    Zero columns get weight 1; their indices are kept on the returned
    weight and a warning is logged.
    """
    if mode in ("identity", None):
        return IDENTITY
    if mode not in ("column_norm", "colnorm"):
        raise ValueError(f"unknown weight mode {mode!r}")
    norms = A.column_norms()
    zero = np.flatnonzero(norms == 0)
    diag = np.ones_like(norms)
    nz = norms > 0
    diag[nz] = 1.0 / norms[nz]
    if zero.size:
        log.warning("column_norm weight: %d zero column(s) given weight 1", zero.size)
    return Weight("diagonal", diag, tuple(int(j) for j in zero))


@dataclass
class SolverState:
    """Live quantities between iterations.

    ``r`` is the residual of the current ``x`` and ``rho = ||r||^2``.
    ``p`` is the last update with ``theta = p^T W^{-1} p``; ``y``, ``wy`` and
    ``phi`` belong to the residual that produced ``p``.
    """

    k: int
    x: np.ndarray
    r: np.ndarray
    y: np.ndarray
    p: np.ndarray
    wy: np.ndarray
    rho: float
    theta: float
    phi: float
    beta: float = math.nan
    gamma: float = math.nan


def plss_init(A: SparseMatrix, b, x0=None, W: Weight = IDENTITY) -> SolverState:
    """First update ``p_1 = (rho_0 / phi_0) W A^T r_0`` and ``x_1 = x_0 + p_1``.

    Raises :class:`Breakdown` if ``A^T r_0`` vanishes while ``r_0 != 0``.
    A caller that wants the zero-iteration exit for an already-solved
    ``x0`` checks ``||b - A x0||`` first (``plss_solve`` does).
    """
    A = as_sparse(A)
    b = check_vector(b, A.m, "b")
    x = np.zeros(A.n) if x0 is None else check_vector(x0, A.n, "x0").copy()
    r = b - A.matvec(x)
    rho = float(r @ r)
    y = A.rmatvec(r)
    wy = W.apply(y)
    phi = float(y @ wy)
    if phi <= PHI_BREAKDOWN:
        raise Breakdown(BREAKDOWN_Y_VANISHED, f"phi={phi:.3e} with rho={rho:.3e}")
    p = (rho / phi) * wy
    theta = W.inner_inverse(p, p)
    x += p
    r = r - A.matvec(p)
    return SolverState(k=1, x=x, r=r, y=y, p=p, wy=wy, rho=float(r @ r), theta=theta, phi=phi)


def plss_step(state: SolverState, A: SparseMatrix, W: Weight = IDENTITY) -> SolverState:
    """One short-recursion update ``p <- beta p + gamma W A^T r``; mutates ``state``."""
    rho = state.rho
    y = A.rmatvec(state.r)
    wy = W.apply(y)
    phi = float(y @ wy)
    if phi <= PHI_BREAKDOWN:
        raise Breakdown(BREAKDOWN_Y_VANISHED, f"phi={phi:.3e} with rho={rho:.3e}")
    tau = math.sqrt(state.theta * phi) / rho
    if tau - 1.0 <= TAU_BREAKDOWN:
        raise Breakdown(BREAKDOWN_STAGNATION, f"tau-1={tau - 1.0:.3e}")
    beta = 1.0 / ((tau - 1.0) * (tau + 1.0))
    gamma = (state.theta / rho) * beta
    p = beta * state.p + gamma * wy
    state.theta = W.inner_inverse(p, p)
    state.x += p
    state.r = state.r - A.matvec(p)
    state.rho = float(state.r @ state.r)
    state.y, state.wy, state.phi, state.p = y, wy, phi, p
    state.beta, state.gamma = beta, gamma
    state.k += 1
    return state


def plss_solve(
    A,
    b,
    x0=None,
    config: Optional[SolverConfig] = None,
    *,
    weight: Optional[Weight] = None,
    callback: Optional[Callback] = None,
) -> SolveReport:
    """Solve the consistent system ``A x = b``.

    Parameters
    ----------
    A : SparseMatrix or array_like
        System matrix, any shape.
    b : array_like
        Right-hand side in the range of ``A``.
    x0 : array_like, optional
        Starting point, default zero.
    config : SolverConfig, optional
        Tolerance, tolerance mode, iteration cap and weight mode.
    weight : Weight, optional
        Overrides ``config.weight_mode``.
    callback : callable, optional
        Called as ``callback(k, x, r)`` after every iterate, including ``k = 0``.

    Returns
    -------
    SolveReport
        Breakdowns are reported through ``status``; nothing is raised for them.
    """
    config = config or SolverConfig()
    A = as_sparse(A)
    b = check_vector(b, A.m, "b")
    W = weight if weight is not None else make_weight(A, config.weight_mode)
    mon = Monitor(b, config, callback)
    if W.zero_columns:
        mon.warnings.append(f"{len(W.zero_columns)} zero column(s) given weight 1")

    x = np.zeros(A.n) if x0 is None else check_vector(x0, A.n, "x0").copy()
    r = b - A.matvec(x)
    if mon.record(0, math.sqrt(float(r @ r)), x, r):
        return mon.report(CONVERGED, x, A, b)

    try:
        state = plss_init(A, b, x, W)
    except Breakdown as exc:
        return mon.report(exc.status, x, A, b)
    if mon.record(state.k, math.sqrt(state.rho), state.x, state.r):
        return mon.report(CONVERGED, state.x, A, b)

    while state.k < config.max_iters:
        try:
            plss_step(state, A, W)
        except Breakdown as exc:
            log.debug("plss breakdown at k=%d: %s", state.k, exc)
            return mon.report(exc.status, state.x, A, b)
        if mon.record(state.k, math.sqrt(state.rho), state.x, state.r):
            return mon.report(CONVERGED, state.x, A, b)
    return mon.report(ITERATION_LIMIT, state.x, A, b)
