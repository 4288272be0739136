"""Growing-sketch projection engines.

An iteration with sketch ``S_k = [s_1 ... s_k]`` takes the update

    p_k = W Y_k (Y_k^T W Y_k)^+ S_k^T r_{k-1},     Y_k = A^T S_k,

which is the minimum ``W^{-1}``-norm correction satisfying the sketched
equations ``S_k^T A (x_{k-1} + p_k) = S_k^T b``.  Three interchangeable
engines evaluate it:

* ``pinv``: dense Gram matrix and symmetric pseudo-inverse (the oracle);
* ``qr``: Householder QR of ``Y_k`` updated one column at a time;
* ``tri``: factored inverse ``(Y_k^T Y_k)^{-1} = R_k D_k R_k^T`` updated by
  triangular products only.

The ``qr`` and ``tri`` engines exploit ``S_{k-1}^T r_{k-1} = 0`` and only
need the scalar ``s_k^T r_{k-1}``. For non-identity ``W`` they run on
``W^{1/2} Y`` and map the result back with ``W^{1/2}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

import numpy as np

from .common import (
    BREAKDOWN_RANK,
    CONVERGED,
    ITERATION_LIMIT,
    Breakdown,
    Callback,
    ConfigError,
    Monitor,
    SolveReport,
    SolverConfig,
)
from .kaczmarz import row_scheduler
from .linalg import IDENTITY, SparseMatrix, Weight, as_sparse, check_vector
from .solver import make_weight

QR_RANK_TOL = 1e-12
TRI_RANK_TOL = 1e-14
ENGINES = ("pinv", "qr", "tri")


class _Columns:
    """Column store that grows by doubling."""

    def __init__(self, rows: int, cap: int = 8):
        self._buf = np.empty((rows, max(cap, 1)))
        self.k = 0

    def append(self, v: np.ndarray) -> None:
        if self.k == self._buf.shape[1]:
            grown = np.empty((self._buf.shape[0], 2 * self._buf.shape[1]))
            grown[:, : self.k] = self._buf[:, : self.k]
            self._buf = grown
        self._buf[:, self.k] = v
        self.k += 1

    @property
    def array(self) -> np.ndarray:
        return self._buf[:, : self.k]


# -- pseudo-inverse oracle ----------------------------------------------------


class SketchHistory:
    """Sketch columns ``S`` (m x k) and their images ``Y = A^T S`` (n x k)."""

    def __init__(self, m: int, n: int):
        self._S = _Columns(m)
        self._Y = _Columns(n)

    def append(self, s: np.ndarray, y: np.ndarray) -> None:
        self._S.append(s)
        self._Y.append(y)

    @classmethod
    def from_sketch(cls, A: SparseMatrix, S) -> "SketchHistory":
        S = np.atleast_2d(np.asarray(S, dtype=np.float64))
        if S.shape[0] != A.m:
            S = S.T
        hist = cls(A.m, A.n)
        for j in range(S.shape[1]):
            hist.append(S[:, j], A.rmatvec(S[:, j]))
        return hist

    @property
    def k(self) -> int:
        return self._S.k

    @property
    def S(self) -> np.ndarray:
        return self._S.array

    @property
    def Y(self) -> np.ndarray:
        return self._Y.array


def _pinv_apply(Y: np.ndarray, W: Weight, rhs: np.ndarray) -> np.ndarray:
    WY = Y if W.is_identity else W.diag[:, None] * Y
    G = Y.T @ WY
    k = G.shape[0]
    G_pinv = np.linalg.pinv(G, rcond=k * np.finfo(float).eps, hermitian=True)
    return WY @ (G_pinv @ rhs)


def sketched_update(A: SparseMatrix, W: Weight, S: SketchHistory, r_prev) -> np.ndarray:
    """Closed-form update ``W Y (Y^T W Y)^+ S^T r`` for the whole sketch history.

    Eigenvalues of the Gram matrix below ``k * eps * max`` are truncated, so
    rank-deficient sketches are handled by the pseudo-inverse.
    """
    if S.k == 0:
        raise ValueError("sketch history is empty")
    W = W if W is not None else IDENTITY
    return _pinv_apply(S.Y, W, S.S.T @ np.asarray(r_prev, dtype=np.float64))


def random_fixed_update(A: SparseMatrix, W: Weight, S: np.ndarray, r_prev) -> np.ndarray:
    """Update for a single freshly drawn block sketch ``S`` (m x r)."""
    Y = A.rmatmat(S)
    return _pinv_apply(Y, W, S.T @ r_prev)


# -- Householder QR engine --------------------------------------------------


@dataclass
class QREngineState:
    """Factored ``Y_k = Q_k T_k``; ``Q_k = H_1 ... H_k`` kept as Householder vectors."""

    n: int
    V: _Columns = field(repr=False, default=None)
    betas: List[float] = field(default_factory=list)
    T: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        if self.V is None:
            self.V = _Columns(self.n)

    @property
    def k(self) -> int:
        return len(self.betas)

    @property
    def r_kk(self) -> float:
        return float(self.T[self.k - 1, self.k - 1])

    def apply_qt(self, v: np.ndarray) -> np.ndarray:
        z = np.array(v, dtype=np.float64)
        V = self.V.array
        for j, beta in enumerate(self.betas):
            vj = V[j:, j]
            z[j:] -= (beta * (vj @ z[j:])) * vj
        return z

    def apply_q(self, v: np.ndarray) -> np.ndarray:
        """``Q_full @ v`` for an n-vector ``v`` (product of all reflectors)."""
        z = np.array(v, dtype=np.float64)
        V = self.V.array
        for j in range(self.k - 1, -1, -1):
            vj = V[j:, j]
            z[j:] -= (self.betas[j] * (vj @ z[j:])) * vj
        return z

    def q_column(self, j: int) -> np.ndarray:
        z = np.zeros(self.n)
        z[j] = 1.0
        V = self.V.array
        for i in range(j, -1, -1):
            vi = V[i:, i]
            z[i:] -= (self.betas[i] * (vi @ z[i:])) * vi
        return z

    def q_matrix(self) -> np.ndarray:
        return np.column_stack([self.q_column(j) for j in range(self.k)]) if self.k else np.zeros((self.n, 0))


def _house(x: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Reflector ``H = I - beta v v^T`` with ``v[0] = 1`` and ``H x = mu e_1``, ``mu >= 0``."""
    v = x.copy()
    sigma = float(x[1:] @ x[1:])
    x0 = float(x[0])
    v[0] = 1.0
    if sigma == 0.0:
        if x0 >= 0.0:
            return v, 0.0, x0
        return v, 2.0, -x0
    mu = math.sqrt(x0 * x0 + sigma)
    v0 = x0 - mu if x0 <= 0.0 else -sigma / (x0 + mu)
    beta = 2.0 * v0 * v0 / (sigma + v0 * v0)
    v[1:] = x[1:] / v0
    return v, beta, mu


def qr_append(state: QREngineState, y_new) -> QREngineState:
    """Append one column to ``Y``: one new reflector and one new column of ``T``.

    Raises :class:`Breakdown` (``breakdown_rank``) when the new column is
    numerically in the span of the previous ones; ``state`` is then unchanged.
    """
    y_new = np.asarray(y_new, dtype=np.float64)
    k = state.k
    if k >= state.n:
        raise Breakdown(BREAKDOWN_RANK, "QR engine already holds n columns")
    z = state.apply_qt(y_new)
    v, beta, mu = _house(z[k:])
    if abs(mu) <= QR_RANK_TOL * np.linalg.norm(y_new):
        raise Breakdown(BREAKDOWN_RANK, f"|r_kk|={abs(mu):.3e} at column {k + 1}")
    full = np.zeros(state.n)
    full[k:] = v
    state.V.append(full)
    state.betas.append(beta)
    T = np.zeros((k + 1, k + 1))
    T[:k, :k] = state.T
    T[:k, k] = z[:k]
    T[k, k] = mu
    state.T = T
    return state


def qr_update_step(state: QREngineState, rho_scalar: float) -> np.ndarray:
    """``p_k = (s_k^T r_{k-1} / r_kk) q_k`` from the current factorization."""
    if state.k == 0:
        raise ValueError("QR engine holds no columns")
    r_kk = state.r_kk
    if abs(r_kk) == 0.0:
        raise Breakdown(BREAKDOWN_RANK, "r_kk is zero")
    if rho_scalar == 0.0:
        return np.zeros(state.n)
    return (rho_scalar / r_kk) * state.q_column(state.k - 1)


# -- triangular-factorization engine ---------------------------------------------


@dataclass
class TriEngineState:
    """``(Y_k^T Y_k)^{-1} = R_k D_k R_k^T`` with ``D_k = diag(1/delta_j)``.

    Column ``j`` of ``R_k`` is ``(t_hat_j, -1, 0, ...)``. ``rhos`` holds the
    scalars ``s_j^T r_{j-1}`` passed to :func:`tri_update_step`, recorded only
    when ``record`` is set.
    """

    n: int
    record: bool = False
    Y: _Columns = field(repr=False, default=None)
    R: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    deltas: List[float] = field(default_factory=list)
    t_hat: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rhos: List[float] = field(default_factory=list)

    def __post_init__(self):
        if self.Y is None:
            self.Y = _Columns(self.n)

    @property
    def k(self) -> int:
        return len(self.deltas)

    @property
    def D(self) -> np.ndarray:
        return np.diag(1.0 / np.asarray(self.deltas))

    def inverse_gram(self) -> np.ndarray:
        return self.R @ self.D @ self.R.T


def tri_append(state: TriEngineState, y_new) -> TriEngineState:
    """Extend ``R``, ``D`` by one column using two triangular products.

    ``t_hat = R (D (R^T (Y^T y)))`` and ``delta = y^T y - (Y^T y)^T t_hat``.
    Raises :class:`Breakdown` when ``delta <= 1e-14 ||y||^2``.
    """
    y_new = np.asarray(y_new, dtype=np.float64)
    k = state.k
    yy = float(y_new @ y_new)
    if k == 0:
        t_hat = np.zeros(0)
        delta = yy
    else:
        c = state.Y.array.T @ y_new
        R = state.R
        t_hat = R @ ((R.T @ c) / np.asarray(state.deltas))
        delta = yy - float(c @ t_hat)
    if not delta > TRI_RANK_TOL * yy:
        raise Breakdown(BREAKDOWN_RANK, f"delta={delta:.3e} at column {k + 1}")
    R = np.zeros((k + 1, k + 1))
    R[:k, :k] = state.R
    R[:k, k] = t_hat
    R[k, k] = -1.0
    state.R = R
    state.deltas.append(delta)
    state.t_hat = t_hat
    state.Y.append(y_new)
    return state


def tri_update_step(state: TriEngineState, rho_scalar: float) -> np.ndarray:
    """``p_k = (s_k^T r_{k-1} / delta_k) (y_k - Y_{k-1} t_hat_k)``; no solves."""
    if state.k == 0:
        raise ValueError("triangular engine holds no columns")
    if state.record:
        state.rhos.append(float(rho_scalar))
    if rho_scalar == 0.0:
        return np.zeros(state.n)
    Y = state.Y.array
    d = Y[:, -1] - Y[:, :-1] @ state.t_hat
    return (rho_scalar / state.deltas[-1]) * d


def lincomb_coeffs(state: TriEngineState, y_k) -> np.ndarray:
    """Coefficients ``alpha_j = t_j^T (Y_j^T y_k) / (s_j^T r_{j-1})``, ``j < k``.

    ``state`` holds the first ``k - 1`` columns with their ``rhos`` recorded.
    With these, ``p_k = (s_k^T r_{k-1} / delta_k) (sum_j alpha_j p_j + y_k)``.
    """
    k1 = state.k
    if len(state.rhos) != k1:
        raise ValueError("lincomb_coeffs needs one recorded rho per stored column (record=True)")
    if k1 == 0:
        return np.zeros(0)
    rhos = np.asarray(state.rhos)
    if np.any(rhos == 0.0):
        raise ZeroDivisionError(f"degenerate history: s_j^T r_(j-1) = 0 at j={int(np.flatnonzero(rhos == 0)[0]) + 1}")
    c = state.Y.array.T @ np.asarray(y_k, dtype=np.float64)
    R = state.R
    return np.array([R[:j, j - 1] @ c[:j] for j in range(1, k1 + 1)]) / rhos


def lincomb_update(alpha, P, y_k, rho_scalar: float, delta_k: float) -> np.ndarray:
    """Rebuild ``p_k`` from previous updates ``P`` (n x (k-1)) and ``alpha``."""
    y_k = np.asarray(y_k, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64).reshape(y_k.size, -1)
    return (rho_scalar / delta_k) * (P @ np.asarray(alpha) + y_k)


# -- sketch providers ---------------------------------------------------------


class SketchProvider:
    """Source of sketch columns ``s_k`` together with ``y_k = A^T s_k``."""

    kind = "abstract"
    growing = True

    def next(self, A: SparseMatrix, r_prev: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def reset(self) -> None:
        pass


class ResidualSketch(SketchProvider):
    """``s_k = r_{k-1}``: the residual history, which yields the short recursion."""

    kind = "residual"

    def next(self, A, r_prev):
        s = np.array(r_prev, dtype=np.float64)
        return s, A.rmatvec(s)


class IdentityColumnSketch(SketchProvider):
    """``s_k = e_{i_k}``: rows visited in a seeded per-epoch order (PLSS Kaczmarz)."""

    kind = "identity_columns"

    def __init__(self, m: int, mode: str = "permutation_epoch", seed: Optional[int] = 0):
        self.m, self.mode, self.seed = m, mode, seed
        self.reset()
        self.last_index: Optional[int] = None

    def reset(self):
        self._stream = row_scheduler(self.m, self.mode, self.seed)

    def next(self, A, r_prev):
        i = next(self._stream)
        self.last_index = i
        s = np.zeros(A.m)
        s[i] = 1.0
        return s, A.row(i)


class RandomGrowingSketch(SketchProvider):
    """Gaussian sketch columns.

    With ``range_projected`` (default) the column is ``A g`` for Gaussian
    ``g``, so every sketch lies in ``range(A)``; otherwise it is a raw
    Gaussian m-vector.
    """

    kind = "random_growing"

    def __init__(self, seed: Optional[int] = 0, range_projected: bool = True):
        self.seed, self.range_projected = seed, range_projected
        self.reset()

    def reset(self):
        self._rng = np.random.default_rng(self.seed)

    def next(self, A, r_prev):
        if self.range_projected:
            s = A.matvec(self._rng.standard_normal(A.n))
        else:
            s = self._rng.standard_normal(A.m)
        return s, A.rmatvec(s)


class RandomFixedSketch(SketchProvider):
    """A fresh m x r standard normal sketch every iteration (no history)."""

    kind = "random_fixed"
    growing = False

    def __init__(self, r: int = 10, seed: Optional[int] = 0):
        if r < 1:
            raise ValueError("sketch size must be positive")
        self.r, self.seed = int(r), seed
        self.reset()

    def reset(self):
        self._rng = np.random.default_rng(self.seed)

    def block(self, m: int) -> np.ndarray:
        return self._rng.standard_normal((m, self.r))


def make_provider(kind: str, A: SparseMatrix, *, seed: Optional[int] = 0, sketch_size: int = 10,
                  schedule: str = "permutation_epoch") -> SketchProvider:
    kind = {"identity": "identity_columns", "random": "random_growing", "gaussian": "random_gaussian",
            "range": "random_growing", "fixed": "random_fixed"}.get(kind, kind)
    if kind == "residual":
        return ResidualSketch()
    if kind == "identity_columns":
        return IdentityColumnSketch(A.m, schedule, seed)
    if kind == "random_growing":
        return RandomGrowingSketch(seed, range_projected=True)
    if kind == "random_gaussian":
        return RandomGrowingSketch(seed, range_projected=False)
    if kind == "random_fixed":
        return RandomFixedSketch(sketch_size, seed)
    raise ConfigError(f"unknown sketch provider {kind!r}")


# -- driver -------------------------------------------------------------------


@dataclass
class ProjectionStep:
    """Per-iteration record yielded by :func:`projection_steps` (live arrays, copy to keep)."""

    k: int
    s: Optional[np.ndarray]
    y: Optional[np.ndarray]
    rho: float
    p: np.ndarray
    x: np.ndarray
    r: np.ndarray
    engine_state: object = None
    reset: bool = False


class _Engine:
    def __init__(self, kind: str, A: SparseMatrix, W: Weight, record: bool):
        self.kind, self.A, self.W, self.record = kind, A, W, record
        self.sqrt_w = W.sqrt()
        self.clear()

    def clear(self):
        A = self.A
        if self.kind == "pinv":
            self.state = SketchHistory(A.m, A.n)
        elif self.kind == "qr":
            self.state = QREngineState(A.n)
        else:
            self.state = TriEngineState(A.n, record=self.record)

    @property
    def size(self) -> int:
        return self.state.k

    def update(self, s, y, r_prev) -> Tuple[float, np.ndarray]:
        rho = float(s @ r_prev)
        if self.kind == "pinv":
            self.state.append(s, y)
            return rho, sketched_update(self.A, self.W, self.state, r_prev)
        yt = y if self.sqrt_w is None else self.sqrt_w * y
        if self.kind == "qr":
            qr_append(self.state, yt)
            p = qr_update_step(self.state, rho)
        else:
            tri_append(self.state, yt)
            p = tri_update_step(self.state, rho)
        return rho, (p if self.sqrt_w is None else self.sqrt_w * p)


def projection_steps(A, b, x0=None, provider: Optional[SketchProvider] = None, engine: str = "pinv",
                     weight: Weight = IDENTITY, *, max_history: Optional[int] = None,
                     record: bool = False) -> Iterator[ProjectionStep]:
    """Yield iterates ``x_k = x_{k-1} + p_k`` indefinitely; the caller stops.

    ``max_history`` clears the engine once it holds that many columns; the
    next update starts a fresh sketch from the current iterate.
    Engine breakdowns propagate as :class:`Breakdown`.
    """
    A = as_sparse(A)
    b = check_vector(b, A.m, "b")
    provider = provider or ResidualSketch()
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {engine!r}")
    if not provider.growing and engine != "pinv":
        raise ConfigError("random_fixed sketches require the pinv engine")
    x = np.zeros(A.n) if x0 is None else check_vector(x0, A.n, "x0").copy()
    r = b - A.matvec(x)
    eng = _Engine(engine, A, weight, record)
    k = 0
    while True:
        k += 1
        reset = False
        if provider.growing:
            if max_history is not None and eng.size >= max_history:
                eng.clear()
                reset = True
            s, y = provider.next(A, r)
            rho, p = eng.update(s, y, r)
        else:
            S = provider.block(A.m)
            s = y = None
            rho = math.nan
            p = random_fixed_update(A, weight, S, r)
        x += p
        r = r - A.matvec(p)
        yield ProjectionStep(k, s, y, rho, p, x, r, eng.state, reset)


def run_projection(A, b, x0=None, provider: Optional[SketchProvider] = None, engine: str = "pinv",
                   config: Optional[SolverConfig] = None, *, weight: Optional[Weight] = None,
                   max_history: Optional[int] = None, callback: Optional[Callback] = None) -> SolveReport:
    """Run the growing-sketch iteration with the selected engine.

    ``identity_columns`` providers default to clearing the history once it
    holds ``m`` columns (one epoch).
    """
    config = config or SolverConfig()
    A = as_sparse(A)
    b = check_vector(b, A.m, "b")
    provider = provider or ResidualSketch()
    W = weight if weight is not None else make_weight(A, config.weight_mode)
    if max_history is None and provider.kind == "identity_columns":
        max_history = A.m
    mon = Monitor(b, config, callback)
    x = np.zeros(A.n) if x0 is None else check_vector(x0, A.n, "x0").copy()
    r = b - A.matvec(x)
    if mon.record(0, float(np.linalg.norm(r)), x, r):
        return mon.report(CONVERGED, x, A, b)

    steps = projection_steps(A, b, x, provider, engine, W, max_history=max_history)
    try:
        for step in steps:
            x = step.x
            if mon.record(step.k, float(np.linalg.norm(step.r)), step.x, step.r):
                return mon.report(CONVERGED, step.x, A, b)
            if step.k >= config.max_iters:
                break
    except Breakdown as exc:
        return mon.report(exc.status, x, A, b)
    return mon.report(ITERATION_LIMIT, x, A, b)
