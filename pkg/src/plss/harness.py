"""Benchmark harness: problem loading, right-hand sides, dispatch and tables."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baselines import craig_solve, lsqr_solve
from .common import ERROR, ConfigError, SolveReport, SolverConfig, check_stop
from .kaczmarz import kaczmarz_solve, kz_solve
from .linalg import SparseMatrix, read_matrix_market, read_vector
from .projection import RandomFixedSketch, make_provider, run_projection
from .solver import plss_solve

log = logging.getLogger(__name__)

SOLVERS = ("plss", "plss-w", "plss-kz", "kaczmarz-classic", "craig", "lsqr",
           "proj-pinv", "proj-qr", "proj-tri", "randproj")

# tolerance, tolerance mode and iteration cap as a function of (m, n)
PRESETS: Dict[str, Tuple[float, str, Callable[[int, int], int]]] = {
    "exp1": (1e-2, "relative", lambda m, n: n),
    "exp2": (1e-6, "relative", lambda m, n: n + 1000),
    "exp3": (1e-2, "absolute", lambda m, n: 500),
    "exp4": (1e-4, "absolute", lambda m, n: n + 1500),
}

TABLE_COLUMNS = ("problem", "m", "n", "nnz", "solver", "iterations", "seconds",
                 "abs_residual", "rel_residual", "status", "fastest", "error")


class ProblemError(RuntimeError):
    """A load or solve failure, tagged with the problem it belongs to."""

    def __init__(self, problem: str, message: str):
        super().__init__(f"[{problem}] {message}")
        self.problem = problem


def synth_rhs(A: SparseMatrix, mode: str = "synthetic_spike") -> Tuple[np.ndarray, np.ndarray]:
    """``x_true = (10, 1, ..., 1)`` and ``b = A x_true``, consistent by construction."""
    if mode not in ("synthetic_spike", "spike"):
        raise ConfigError(f"synth_rhs only supports synthetic_spike, got {mode!r}")
    x_true = np.ones(A.n)
    if A.n:
        x_true[0] = 10.0
    return x_true, A.matvec(x_true)


@dataclass
class ProblemSpec:
    matrix: str
    solver: str = "plss"
    name: Optional[str] = None
    rhs_mode: str = "synthetic_spike"
    rhs: Optional[str] = None
    x0: Optional[str] = None
    tol: Optional[float] = None
    tol_mode: Optional[str] = None
    max_iters: Optional[int] = None
    preset: Optional[str] = None
    weight: Optional[str] = None
    seed: int = 0
    sketch_size: Optional[int] = None
    sketch: str = "residual"
    trace: Optional[str] = None
    report: Optional[str] = None

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}; choose from {', '.join(SOLVERS)}")
        self.rhs_mode = {"spike": "synthetic_spike", "file": "from_file"}.get(self.rhs_mode, self.rhs_mode)
        if self.rhs is not None and self.rhs_mode == "synthetic_spike":
            self.rhs_mode = "from_file"
        if self.rhs_mode not in ("synthetic_spike", "from_file"):
            raise ConfigError(f"unknown rhs mode {self.rhs_mode!r}")
        if self.rhs_mode == "from_file" and not self.rhs:
            raise ConfigError("rhs_mode from_file needs an rhs path")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.name is None:
            self.name = Path(self.matrix).stem

    def solver_config(self, m: int, n: int) -> SolverConfig:
        tol, mode, cap = 1e-8, "relative", None
        if self.preset:
            tol, mode, cap_fn = PRESETS[self.preset]
            cap = cap_fn(m, n)
        if self.tol is not None:
            tol = self.tol
        if self.tol_mode is not None:
            mode = self.tol_mode
        if self.max_iters is not None:
            cap = self.max_iters
        if cap is None:
            cap = max(n, 1)
        weight = self.weight or ("column_norm" if self.solver == "plss-w" else "identity")
        r = self.sketch_size
        if r is None:
            r = (5 if n > 10**5 else 50) if self.preset == "exp3" else 10
        return SolverConfig(tol=tol, tol_mode=mode, max_iters=cap, weight_mode=weight,
                            trace=self.trace is not None, seed=self.seed, sketch_size=r)


def load_problem(spec: ProblemSpec):
    A = read_matrix_market(spec.matrix)
    if spec.rhs_mode == "synthetic_spike":
        _, b = synth_rhs(A)
    else:
        b = read_vector(spec.rhs)
        if b.size != A.m:
            raise ConfigError(f"rhs has length {b.size}, matrix has {A.m} rows")
    x0 = None
    if spec.x0:
        x0 = read_vector(spec.x0)
        if x0.size != A.n:
            raise ConfigError(f"x0 has length {x0.size}, matrix has {A.n} columns")
    return A, b, x0


def dispatch(solver: str, A: SparseMatrix, b, x0, config: SolverConfig, sketch: str = "residual") -> SolveReport:
    if solver in ("plss", "plss-w"):
        return plss_solve(A, b, x0, config)
    if solver == "plss-kz":
        return kz_solve(A, b, x0, config)
    if solver == "kaczmarz-classic":
        return kaczmarz_solve(A, b, x0, config)
    if solver == "craig":
        return craig_solve(A, b, x0, config)
    if solver == "lsqr":
        return lsqr_solve(A, b, x0, config)
    if solver.startswith("proj-"):
        provider = make_provider(sketch, A, seed=config.seed, sketch_size=config.sketch_size)
        return run_projection(A, b, x0, provider, solver[5:], config)
    if solver == "randproj":
        return run_projection(A, b, x0, RandomFixedSketch(config.sketch_size, config.seed), "pinv", config)
    raise ConfigError(f"unknown solver {solver!r}")


def structural_rank(A: SparseMatrix) -> Optional[int]:
    try:
        from scipy.sparse import csr_matrix
        from scipy.sparse.csgraph import structural_rank as _srank
    except ImportError:  # pragma: no cover
        return None
    return int(_srank(csr_matrix((A.values, A.col_idx, A.row_ptr), shape=A.shape)))


def write_trace(report: SolveReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "abs_residual", "rel_residual", "elapsed_seconds"])
        for row in report.trace or ():
            w.writerow([row.iter, repr(row.abs_residual), repr(row.rel_residual), repr(row.elapsed_seconds)])


@dataclass
class ProblemResult:
    spec: ProblemSpec
    report: Optional[SolveReport]
    meta: dict = field(default_factory=dict)
    error: Optional[str] = None

    def to_dict(self) -> dict:
        d = {"problem": self.spec.name, "solver": self.spec.solver, **self.meta}
        if self.report is not None:
            d.update(self.report.to_dict())
        else:
            d["status"] = ERROR
        if self.error:
            d["error"] = self.error
        return d


def run_problem(spec: ProblemSpec) -> ProblemResult:
    """Load, solve, and write the optional trace CSV and JSON report for one spec.

    Errors are re-raised with the problem name attached.
    """
    try:
        A, b, x0 = load_problem(spec)
    except Exception as exc:
        raise ProblemError(spec.name, f"{type(exc).__name__}: {exc}") from exc
    config = spec.solver_config(A.m, A.n)
    meta = {"matrix": str(spec.matrix), "m": A.m, "n": A.n, "nnz": A.nnz,
            "structural_rank": structural_rank(A), "tol": config.tol, "tol_mode": config.tol_mode,
            "max_iters": config.max_iters, "weight": config.weight_mode, "seed": config.seed}
    if spec.solver == "randproj":
        meta["sketch_size"] = config.sketch_size
    try:
        report = dispatch(spec.solver, A, b, x0, config, spec.sketch)
    except Exception as exc:
        raise ProblemError(f"{spec.name}/{spec.solver}", f"{type(exc).__name__}: {exc}") from exc
    result = ProblemResult(spec, report, meta)
    if spec.trace:
        write_trace(report, spec.trace)
    if spec.report:
        Path(spec.report).parent.mkdir(parents=True, exist_ok=True)
        with open(spec.report, "w") as fh:
            json.dump(result.to_dict(), fh, indent=2)
    return result


# -- batch ---------------------------------------------------------------------


@dataclass
class BenchmarkManifest:
    problems: List[ProblemSpec]
    output_dir: str = "bench-out"
    jobs: int = 1

    def __post_init__(self):
        seen = set()
        for p in self.problems:
            key = (p.name, p.solver)
            if key in seen:
                raise ConfigError(f"duplicate (problem, solver) pair {key}")
            seen.add(key)
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")


_SPEC_FIELDS = {f for f in ProblemSpec.__dataclass_fields__}


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def load_manifest(path, output_dir: Optional[str] = None, jobs: Optional[int] = None) -> BenchmarkManifest:
    """Read a JSON manifest.

    ``{"output_dir": ..., "jobs": ..., "defaults": {...}, "problems": [...]}``;
    each problem entry holds :class:`ProblemSpec` fields, and ``solvers`` (a
    list) expands into one spec per solver. Relative paths resolve against
    the manifest's directory.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    if isinstance(data, list):
        data = {"problems": data}
    base = path.parent
    defaults = data.get("defaults", {})
    specs = []
    for entry in data.get("problems", []):
        entry = {**defaults, **entry}
        solvers = entry.pop("solvers", None) or [entry.pop("solver", "plss")]
        entry.pop("solver", None)
        unknown = set(entry) - _SPEC_FIELDS
        if unknown:
            raise ConfigError(f"unknown manifest fields {sorted(unknown)}")
        for key in ("matrix", "rhs", "x0"):
            if entry.get(key) and not os.path.isabs(entry[key]):
                entry[key] = str(base / entry[key])
        for solver in solvers:
            specs.append(ProblemSpec(solver=solver, **entry))
    out = output_dir or data.get("output_dir") or "bench-out"
    if not os.path.isabs(out) and output_dir is None:
        out = str(base / out)
    return BenchmarkManifest(specs, out, jobs if jobs is not None else int(data.get("jobs", 1)))


def _run_isolated(spec: ProblemSpec) -> dict:
    try:
        res = run_problem(spec)
    except Exception as exc:  # isolation: one bad problem never aborts the batch
        return {"problem": spec.name, "solver": spec.solver, "status": ERROR, "error": str(exc)}
    return res.to_dict()


def run_benchmark(manifest: BenchmarkManifest) -> List[dict]:
    """Run every (problem, solver) pair and write ``results.csv`` / ``results.json``.

    Rows come back in manifest order whatever the job count; ``fastest``
    marks the quickest converged solver per problem.
    """
    out = Path(manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    specs = []
    for spec in manifest.problems:
        if spec.trace is None and spec.report is None:
            stem = f"{_safe(spec.name)}__{spec.solver}"
            spec = replace(spec, trace=str(out / "traces" / f"{stem}.csv"))
        specs.append(spec)

    if manifest.jobs > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=manifest.jobs) as pool:
            raw = list(pool.map(_run_isolated, specs))
    else:
        raw = [_run_isolated(s) for s in specs]

    rows = [_table_row(d) for d in raw]
    _mark_fastest(rows)
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k)) for k in TABLE_COLUMNS})
    with open(out / "results.json", "w") as fh:
        json.dump(rows, fh, indent=2)
    return rows


def _table_row(d: dict) -> dict:
    return {
        "problem": d.get("problem"),
        "m": d.get("m"),
        "n": d.get("n"),
        "nnz": d.get("nnz"),
        "solver": d.get("solver"),
        "iterations": d.get("iterations"),
        "seconds": d.get("wall_seconds"),
        "abs_residual": d.get("final_abs_residual"),
        "rel_residual": d.get("final_rel_residual"),
        "status": d.get("status"),
        "fastest": False,
        "error": d.get("error"),
    }


def _mark_fastest(rows: Sequence[dict]) -> None:
    best: Dict[str, dict] = {}
    for row in rows:
        if row["status"] != "converged":
            continue
        cur = best.get(row["problem"])
        if cur is None or row["seconds"] < cur["seconds"]:
            best[row["problem"]] = row
    for row in best.values():
        row["fastest"] = True


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


__all__ = [
    "SOLVERS", "PRESETS", "ProblemError", "ProblemSpec", "BenchmarkManifest", "ProblemResult",
    "synth_rhs", "check_stop", "run_problem", "run_benchmark", "load_manifest", "dispatch",
]
