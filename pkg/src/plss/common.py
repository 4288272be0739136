"""Solver configuration, stopping rule and run reports shared by all solvers."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict
from typing import Callable, List, Optional

import numpy as np

# Terminal statuses.
CONVERGED = "converged"
ITERATION_LIMIT = "iteration_limit"
BREAKDOWN_Y_VANISHED = "breakdown_y_vanished"
BREAKDOWN_STAGNATION = "breakdown_stagnation"
BREAKDOWN_RANK = "breakdown_rank"
ERROR = "error"

STATUSES = (CONVERGED, ITERATION_LIMIT, BREAKDOWN_Y_VANISHED, BREAKDOWN_STAGNATION, BREAKDOWN_RANK, ERROR)

# phi = y^T W y below this, with the residual still above tolerance, means b is
# numerically outside range(A).
PHI_BREAKDOWN = 1e-300
# tau >= 1 by Cauchy-Schwarz; tau - 1 at this level leaves no usable direction.
TAU_BREAKDOWN = 1e-14


class ConfigError(ValueError):
    """Invalid solver or harness configuration."""


class Breakdown(ArithmeticError):
    """A vanishing denominator; ``status`` names the terminal report status."""

    def __init__(self, status: str, message: str = ""):
        super().__init__(message or status)
        self.status = status


@dataclass
class SolverConfig:
    tol: float = 1e-8
    tol_mode: str = "relative"
    max_iters: int = 1000
    weight_mode: str = "identity"
    trace: bool = False
    seed: int = 0
    sketch_size: int = 10

    def __post_init__(self):
        if not (self.tol > 0 and math.isfinite(self.tol)):
            raise ConfigError(f"tol must be positive and finite, got {self.tol}")
        aliases = {"rel": "relative", "abs": "absolute"}
        self.tol_mode = aliases.get(self.tol_mode, self.tol_mode)
        if self.tol_mode not in ("relative", "absolute"):
            raise ConfigError(f"tol_mode must be relative or absolute, got {self.tol_mode!r}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError(f"max_iters must be a positive integer, got {self.max_iters}")
        self.max_iters = int(self.max_iters)
        wa = {"colnorm": "column_norm", "column-norm": "column_norm"}
        self.weight_mode = wa.get(self.weight_mode, self.weight_mode)
        if self.weight_mode not in ("identity", "column_norm"):
            raise ConfigError(f"weight_mode must be identity or column_norm, got {self.weight_mode!r}")
        if self.sketch_size < 1:
            raise ConfigError("sketch_size must be at least 1")


def check_stop(r_norm: float, b_norm: float, config: SolverConfig) -> bool:
    """True iff the configured residual inequality holds."""
    if config.tol_mode == "relative":
        if not b_norm > 0:
            raise ConfigError("relative tolerance needs a nonzero right-hand side")
        return r_norm <= config.tol * b_norm
    return r_norm <= config.tol


@dataclass(frozen=True)
class TraceRow:
    iter: int
    abs_residual: float
    rel_residual: float
    elapsed_seconds: float


@dataclass
class SolveReport:
    status: str
    iterations: int
    final_abs_residual: float
    final_rel_residual: float
    wall_seconds: float
    x: np.ndarray = field(repr=False)
    true_abs_residual: float = float("nan")
    trace: Optional[List[TraceRow]] = field(default=None, repr=False)
    skipped: int = 0
    warnings: List[str] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def to_dict(self, include_x: bool = False) -> dict:
        d = {
            "status": self.status,
            "iterations": self.iterations,
            "final_abs_residual": self.final_abs_residual,
            "final_rel_residual": self.final_rel_residual,
            "true_abs_residual": self.true_abs_residual,
            "wall_seconds": self.wall_seconds,
            "skipped": self.skipped,
            "warnings": list(self.warnings),
        }
        if include_x:
            d["x"] = self.x.tolist()
        if self.trace is not None:
            d["trace"] = [asdict(row) for row in self.trace]
        return d


# callback(k, x, r): x and r are the solver's live arrays (copy to keep); r may be None.
Callback = Callable[[int, np.ndarray, np.ndarray], None]


class Monitor:
    """Tracks residual norms, the stopping rule and the optional trace for one solve."""

    def __init__(self, b: np.ndarray, config: SolverConfig, callback: Optional[Callback] = None):
        self.config = config
        self.b_norm = float(np.linalg.norm(b))
        if config.tol_mode == "relative" and not self.b_norm > 0:
            raise ConfigError("relative tolerance needs a nonzero right-hand side")
        self.callback = callback
        self.trace: Optional[List[TraceRow]] = [] if config.trace else None
        self.t0 = time.perf_counter()
        self.k = 0
        self.r_norm = math.inf
        self.warnings: List[str] = []

    def rel(self, r_norm: float) -> float:
        return r_norm / self.b_norm if self.b_norm > 0 else (0.0 if r_norm == 0 else math.inf)

    def record(self, k: int, r_norm: float, x: Optional[np.ndarray] = None, r: Optional[np.ndarray] = None) -> bool:
        """Log iterate ``k`` and return whether the stopping rule is met."""
        self.k = k
        self.r_norm = float(r_norm)
        if self.trace is not None:
            self.trace.append(TraceRow(k, self.r_norm, self.rel(self.r_norm), time.perf_counter() - self.t0))
        if self.callback is not None and x is not None:
            self.callback(k, x, r)
        return check_stop(self.r_norm, self.b_norm, self.config)

    def report(self, status: str, x: np.ndarray, A=None, b=None, skipped: int = 0) -> SolveReport:
        true_res = float("nan")
        if A is not None and b is not None:
            true_res = float(np.linalg.norm(b - A.matvec(x)))
        return SolveReport(
            status=status,
            iterations=self.k,
            final_abs_residual=self.r_norm,
            final_rel_residual=self.rel(self.r_norm),
            wall_seconds=time.perf_counter() - self.t0,
            x=x,
            true_abs_residual=true_res,
            trace=self.trace,
            skipped=skipped,
            warnings=self.warnings,
        )
