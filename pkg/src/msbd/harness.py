"""Monte Carlo phase-transition grids with deterministic, canonical output.

A grid varies exactly two of (n, p, theta, kappa) and runs a fixed
number of independent trials per cell.  Each trial synthesizes a
filter, draws sparse inputs, solves with restarts, and scores the
recovered equalizer.  Trial seeds are base_seed + trial_index with
trials enumerated in canonical cell order, so outcomes are independent
of worker count or scheduling; a failed trial (solver error, timeout)
counts as unsuccessful and never aborts the grid.

The canonical CSV holds one row per cell, sorted by (n, p, theta,
kappa, loss), floats at 17 significant digits.  Reruns with the same
config and base seed are byte-identical; measured wall-clock times are
kept in memory and printed to stderr but written as 0.0 unless timing
emission is explicitly requested, since real timings would break
reproducibility.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import sys
import time
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

from .errors import IoError, MsbdError, ParameterError
from .losses import build_preconditioner
from .metrics import success_indicator
from .signals import generate_observations, sample_bernoulli_gaussian, synthesize_filter
from .solver import DeadlineExceeded, SolverConfig, run_with_restarts

AXIS_NAMES = ("n", "p", "theta", "kappa")
CSV_HEADER = "n,p,theta,kappa,loss,trials,successes,rate,mean_iters,mean_runtime_ms"
FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class ExperimentGrid:
    """Two varying axes, fixed values for the rest, and solver settings."""

    axes: Dict[str, Sequence]
    fixed: Dict[str, float]
    trials_per_cell: int = 10
    base_seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if len(self.axes) != 2:
            raise ParameterError(f"exactly two axes must vary, got {list(self.axes)}")
        for name, values in self.axes.items():
            if name not in AXIS_NAMES:
                raise ParameterError(f"unknown axis {name!r}; choose from {AXIS_NAMES}")
            if len(values) < 1:
                raise ParameterError(f"axis {name!r} has no values")
        for name in self.fixed:
            if name not in AXIS_NAMES:
                raise ParameterError(f"unknown fixed parameter {name!r}")
            if name in self.axes:
                raise ParameterError(f"{name!r} is both fixed and varying")
        missing = set(AXIS_NAMES) - set(self.axes) - set(self.fixed)
        if missing:
            raise ParameterError(f"parameters without values: {sorted(missing)}")
        if self.trials_per_cell < 1:
            raise ParameterError("trials_per_cell must be >= 1")

    def cells(self) -> List[dict]:
        """All parameter combinations in canonical sorted order."""
        combos = []
        for a in self.axes[self._axis(0)]:
            for b in self.axes[self._axis(1)]:
                cell = dict(self.fixed)
                cell[self._axis(0)] = a
                cell[self._axis(1)] = b
                combos.append(
                    {
                        "n": int(cell["n"]),
                        "p": int(cell["p"]),
                        "theta": float(cell["theta"]),
                        "kappa": float(cell["kappa"]),
                    }
                )
        combos.sort(key=lambda c: (c["n"], c["p"], c["theta"], c["kappa"]))
        return combos

    def _axis(self, i) -> str:
        return list(self.axes)[i]


@dataclass(frozen=True)
class CellResult:
    """Aggregated outcomes of all trials in one grid cell."""

    n: int
    p: int
    theta: float
    kappa: float
    loss: str
    trials: int
    successes: int
    rate: float
    mean_iters: float
    mean_runtime_ms: float
    error_tags: tuple = ()


@dataclass(frozen=True)
class SuccessRateTable:
    """Canonically ordered grid results."""

    rows: List[CellResult]

    def sorted_rows(self) -> List[CellResult]:
        return sorted(
            self.rows, key=lambda r: (r.n, r.p, r.theta, r.kappa, r.loss)
        )


def run_trial(cell, solver_cfg, seed, budget_s=None):
    """One synthesize-solve-score trial; never raises on solver failure.

    Returns (success, iterations, runtime_ms, error_tag).  Any package
    error or budget overrun marks the trial unsuccessful with a tag.
    """
    start = time.monotonic()
    deadline = start + budget_s if budget_s else None
    cfg = dataclasses.replace(solver_cfg, seed=seed, theta=cell["theta"])
    try:
        g = synthesize_filter(cell["n"], cell["kappa"], seed)
        X = sample_bernoulli_gaussian(cell["n"], cell["p"], cell["theta"], seed)
        Y = generate_observations(g, X)
        R = build_preconditioner(Y, cell["theta"]) if cfg.use_preconditioner else None
        result = run_with_restarts(Y, cfg, R=R, deadline=deadline)
        success, _ = success_indicator(result.g_inv_hat, g)
        iters = result.iterations_used
        tag = ""
    except DeadlineExceeded:
        success, iters, tag = False, 0, "timeout"
    except MsbdError as exc:
        success, iters, tag = False, 0, type(exc).__name__
    runtime_ms = (time.monotonic() - start) * 1000.0
    return bool(success), int(iters), float(runtime_ms), tag


def _trial_star(args):
    return run_trial(*args)


def run_phase_grid(grid, workers=1, budget_s=60.0, progress=False) -> SuccessRateTable:
    """Run every cell of the grid; outcomes are schedule-independent.

    Trial seeds are assigned per (cell, trial) before any work starts
    and checked for collisions, so results do not depend on workers.
    """
    cells = grid.cells()
    jobs = []
    seen = set()
    index = 0
    for ci, cell in enumerate(cells):
        for t in range(grid.trials_per_cell):
            seed = grid.base_seed + index
            if seed in seen:
                raise ParameterError(f"trial seed collision at {seed}")
            seen.add(seed)
            jobs.append((ci, (cell, grid.solver, seed, budget_s)))
            index += 1

    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_trial_star, [spec for _, spec in jobs], chunksize=1))
    else:
        outcomes = []
        for ji, (_, spec) in enumerate(jobs):
            outcomes.append(_trial_star(spec))
            if progress:
                print(f"trial {ji + 1}/{len(jobs)} done", file=sys.stderr)

    rows = []
    per_cell = {ci: [] for ci in range(len(cells))}
    for (ci, _), outcome in zip(jobs, outcomes):
        per_cell[ci].append(outcome)
    for ci, cell in enumerate(cells):
        outs = per_cell[ci]
        successes = sum(1 for s, _, _, _ in outs if s)
        trials = len(outs)
        rows.append(
            CellResult(
                n=cell["n"],
                p=cell["p"],
                theta=cell["theta"],
                kappa=cell["kappa"],
                loss=grid.solver.loss_kind,
                trials=trials,
                successes=successes,
                rate=successes / trials,
                mean_iters=sum(i for _, i, _, _ in outs) / trials,
                mean_runtime_ms=sum(ms for _, _, ms, _ in outs) / trials,
                error_tags=tuple(tag for _, _, _, tag in outs if tag),
            )
        )
    return SuccessRateTable(rows=rows)


def emit_results(table, path, include_timing=False):
    """Write the canonical CSV; see the module docstring for the contract.

    include_timing=False (the default) writes 0.0 in mean_runtime_ms so
    the file is a pure function of (config, base_seed); True writes the
    measured means and gives up byte-reproducibility.
    """
    lines = [CSV_HEADER]
    for r in table.sorted_rows():
        runtime = r.mean_runtime_ms if include_timing else 0.0
        lines.append(
            ",".join(
                (
                    str(r.n),
                    str(r.p),
                    FLOAT_FMT % r.theta,
                    FLOAT_FMT % r.kappa,
                    r.loss,
                    str(r.trials),
                    str(r.successes),
                    FLOAT_FMT % r.rate,
                    FLOAT_FMT % r.mean_iters,
                    FLOAT_FMT % runtime,
                )
            )
        )
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write results to {path}: {exc}") from exc


def read_results(path) -> SuccessRateTable:
    """Read a CSV written by emit_results back into a table."""
    try:
        with open(path, "r") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read results from {path}: {exc}") from exc
    if not lines or lines[0] != CSV_HEADER:
        raise IoError(f"{path} is not a results CSV")
    rows = []
    for line in lines[1:]:
        f = line.split(",")
        if len(f) != 10:
            raise IoError(f"{path}: malformed row {line!r}")
        rows.append(
            CellResult(
                n=int(f[0]),
                p=int(f[1]),
                theta=float(f[2]),
                kappa=float(f[3]),
                loss=f[4],
                trials=int(f[5]),
                successes=int(f[6]),
                rate=float(f[7]),
                mean_iters=float(f[8]),
                mean_runtime_ms=float(f[9]),
            )
        )
    return SuccessRateTable(rows=rows)


def print_timing_summary(table, stream=None):
    """Human-readable mean runtimes per cell (stderr by default)."""
    stream = stream or sys.stderr
    for r in table.sorted_rows():
        print(
            f"cell n={r.n} p={r.p} theta={r.theta:g} kappa={r.kappa:g}: "
            f"rate={r.rate:.2f} mean_iters={r.mean_iters:.1f} "
            f"mean_runtime={r.mean_runtime_ms:.1f} ms",
            file=stream,
        )
