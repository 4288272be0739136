"""Row-action solvers: classical Kaczmarz and the history-corrected PLSS-KZ variant.

PLSS-KZ uses identity columns as sketches. Each step projects onto one
equation while staying orthogonal to all previous updates of the current
history segment, so after ``m`` distinct rows of a full-row-rank system the
residual vanishes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional

import numpy as np

from .common import (
    CONVERGED,
    ITERATION_LIMIT,
    Callback,
    ConfigError,
    Monitor,
    SolveReport,
    SolverConfig,
)
from .linalg import SparseMatrix, as_sparse, check_vector

log = logging.getLogger(__name__)

# ||a_i||^2 - ||d||^2 relative to ||a_i||^2 below which the row is treated as
# dependent on the stored update directions.
KZ_DEPENDENT_TOL = 1e-14

SCHEDULES = ("permutation_epoch", "cyclic")


def row_scheduler(m: int, mode: str = "permutation_epoch", seed: Optional[int] = 0) -> Iterator[int]:
    """Infinite stream of row indices; each block of ``m`` is a permutation of ``range(m)``."""
    if m < 1:
        raise ValueError("row_scheduler needs m >= 1")
    if mode not in SCHEDULES:
        raise ConfigError(f"unknown row schedule {mode!r}")
    if mode == "cyclic":
        while True:
            yield from range(m)
    rng = np.random.default_rng(seed)
    while True:
        yield from (int(i) for i in rng.permutation(m))


def _zero_row_warning(i: int) -> str:
    return f"row {i} is zero; skipped"


def classical_kaczmarz_step(x, A: SparseMatrix, b, i: int) -> np.ndarray:
    """``x + ((b_i - a_i^T x) / ||a_i||^2) a_i``; a zero row leaves ``x`` unchanged."""
    a = A.row(i)
    aa = float(a @ a)
    if aa == 0.0:
        log.warning(_zero_row_warning(i))
        return np.array(x, dtype=np.float64)
    return x + ((b[i] - A.row_dot(i, x)) / aa) * a


@dataclass
class KaczmarzState:
    """Iterate, residual and the update history of the current segment.

    ``AP[:, j] = A @ P[:, j]``, so row ``i`` of ``AP`` is ``P^T a_i``.
    """

    x: np.ndarray
    r: np.ndarray
    P: np.ndarray
    AP: np.ndarray
    theta: np.ndarray
    h: int = 0
    k: int = 0
    skipped: int = 0
    warnings: List[str] = field(default_factory=list)

    @classmethod
    def start(cls, A: SparseMatrix, b, x0=None, max_history: Optional[int] = None) -> "KaczmarzState":
        cap = A.m if max_history is None else int(max_history)
        if cap < 1:
            raise ConfigError("max_history must be at least 1")
        x = np.zeros(A.n) if x0 is None else np.array(x0, dtype=np.float64)
        r = np.asarray(b, dtype=np.float64) - A.matvec(x)
        return cls(x=x, r=r, P=np.zeros((A.n, cap)), AP=np.zeros((A.m, cap)), theta=np.zeros(cap))

    @property
    def capacity(self) -> int:
        return self.theta.size

    def clear_history(self) -> None:
        self.h = 0


def kz_step(state: KaczmarzState, A: SparseMatrix, b, i: int) -> KaczmarzState:
    """Project onto row ``i`` orthogonally to the stored updates; mutates ``state``.

    ``p = gamma (a_i - P Theta^{-1} P^T a_i)`` with
    ``gamma = r_i / ((||a_i|| - ||d||)(||a_i|| + ||d||))`` and
    ``d = Theta^{-1/2} P^T a_i``. Zero rows and rows dependent on the history
    are skipped and counted.
    """
    if state.h >= state.capacity:
        state.clear_history()
    a = A.row(i)
    aa = float(a @ a)
    state.k += 1
    if aa == 0.0:
        state.skipped += 1
        msg = _zero_row_warning(i)
        if msg not in state.warnings:
            state.warnings.append(msg)
        return state
    h = state.h
    if h == 0:
        p = (state.r[i] / aa) * a
    else:
        c = state.AP[i, :h]
        theta = state.theta[:h]
        d_norm = math.sqrt(float(c @ (c / theta)))
        a_norm = math.sqrt(aa)
        denom = (a_norm - d_norm) * (a_norm + d_norm)
        if denom <= KZ_DEPENDENT_TOL * aa:
            state.skipped += 1
            return state
        p = (state.r[i] / denom) * (a - state.P[:, :h] @ (c / theta))
    Ap = A.matvec(p)
    state.x += p
    state.r -= Ap
    state.P[:, h] = p
    state.AP[:, h] = Ap
    state.theta[h] = float(p @ p)
    state.h = h + 1
    return state


def kz_solve(
    A,
    b,
    x0=None,
    config: Optional[SolverConfig] = None,
    *,
    schedule: str = "permutation_epoch",
    max_history: Optional[int] = None,
    callback: Optional[Callback] = None,
) -> SolveReport:
    """PLSS-KZ with rows drawn without replacement; history cleared every epoch.

    ``max_history`` (default ``m``) additionally bounds the stored updates.
    """
    config = config or SolverConfig()
    A = as_sparse(A)
    b = check_vector(b, A.m, "b")
    mon = Monitor(b, config, callback)
    state = KaczmarzState.start(A, b, None if x0 is None else check_vector(x0, A.n, "x0"), max_history)
    if mon.record(0, float(np.linalg.norm(state.r)), state.x, state.r):
        return mon.report(CONVERGED, state.x, A, b)
    rows = row_scheduler(A.m, schedule, config.seed)
    status = ITERATION_LIMIT
    while state.k < config.max_iters:
        if state.k % A.m == 0:
            state.clear_history()
        kz_step(state, A, b, next(rows))
        if mon.record(state.k, float(np.linalg.norm(state.r)), state.x, state.r):
            status = CONVERGED
            break
    mon.warnings.extend(state.warnings)
    return mon.report(status, state.x, A, b, skipped=state.skipped)


def kaczmarz_solve(
    A,
    b,
    x0=None,
    config: Optional[SolverConfig] = None,
    *,
    schedule: str = "permutation_epoch",
    callback: Optional[Callback] = None,
) -> SolveReport:
    """Memoryless classical Kaczmarz sweeps over the same row schedule."""
    config = config or SolverConfig()
    A = as_sparse(A)
    b = check_vector(b, A.m, "b")
    mon = Monitor(b, config, callback)
    x = np.zeros(A.n) if x0 is None else check_vector(x0, A.n, "x0").copy()
    r = b - A.matvec(x)
    if mon.record(0, float(np.linalg.norm(r)), x, r):
        return mon.report(CONVERGED, x, A, b)
    rows = row_scheduler(A.m, schedule, config.seed)
    skipped = 0
    for k in range(1, config.max_iters + 1):
        i = next(rows)
        a = A.row(i)
        aa = float(a @ a)
        if aa == 0.0:
            skipped += 1
        else:
            p = (r[i] / aa) * a
            x += p
            r -= A.matvec(p)
        if mon.record(k, float(np.linalg.norm(r)), x, r):
            return mon.report(CONVERGED, x, A, b, skipped=skipped)
    return mon.report(ITERATION_LIMIT, x, A, b, skipped=skipped)
