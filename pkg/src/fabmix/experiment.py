"""Experiment harness: race batch against online learners over N and D
sweeps, average seeded repetitions, and emit plot-ready CSV files.

Within one (n, dim, repetition) cell every learner receives the same
dataset and the same initial model; both are hashed into each trace
file's header comment so fairness is checkable after the fact. Seeds
derive from numpy's SeedSequence: the repetition's entropy (an explicit
seed or base_seed + repetition index) is spawned with the cell's
(n_index, dim_index) key into four streams (truth, data, init, order).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import GeneratorSpec, sample_dataset, sample_ground_truth
from .exceptions import MixtureError
from .fic import FabConfig, component_dof, fit_fab_batch
from .incremental import fit_incremental_em
from .io import checkpoint_document, format_real
from .model import Dataset, MixtureModel, default_init, fit_batch_em
from .online import fit_fab_online
from .trace import FicTrace

LEARNERS = ("em_batch", "em_online", "fab_batch", "fab_online")


@dataclass
class ExperimentConfig:
    """Everything one reproducible racing experiment needs."""

    n_values: list[int]
    dim_values: list[int]
    k_true: int = 4
    weights: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4)
    mean_scale: float = 10.0
    cov_scale: float = 1.0
    k_init: int = 8
    repetitions: int = 10
    learners: tuple[str, ...] = ("fab_batch", "fab_online")
    tol: float = 1e-6
    max_iters: int = 100
    mode: str = "exact_stats"
    prune_threshold: float = 0.01
    inner_v_iters: int = 3
    base_seed: int = 0
    seeds: list[int] | None = None
    output_dir: str = "out"
    name: str = "experiment"

    def __post_init__(self):
        if not self.n_values or not self.dim_values:
            raise ValueError("n_values and dim_values must be non-empty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        unknown = set(self.learners) - set(LEARNERS)
        if unknown:
            raise ValueError(f"unknown learner(s) {sorted(unknown)}; expected subset of {LEARNERS}")
        if self.seeds is not None and len(self.seeds) != self.repetitions:
            raise ValueError("seeds list must have one entry per repetition")

    def rep_entropy(self, rep: int) -> int:
        return int(self.seeds[rep]) if self.seeds is not None else self.base_seed + rep

    def cell_seeds(self, n_index: int, dim_index: int, rep: int) -> tuple[int, int, int, int]:
        """(truth, data, init, order) seeds for one cell repetition."""
        ss = np.random.SeedSequence(self.rep_entropy(rep), spawn_key=(n_index, dim_index))
        return tuple(int(s) for s in ss.generate_state(4, dtype=np.uint64))


@dataclass
class RunResult:
    learner: str
    n: int
    dim: int
    seed: int
    trace: FicTrace
    model: MixtureModel


@dataclass
class CellSummary:
    learner: str
    n: int
    dim: int
    mean_fic_per_iteration: list[float]
    mean_iters_to_converge: float
    mean_final_fic: float
    repetitions_used: int


@dataclass
class RaceSummary:
    cells: dict[tuple[str, int, int], CellSummary] = field(default_factory=dict)
    runs: list[RunResult] = field(default_factory=list)
    failures: list[tuple[str, int, int, int, str]] = field(default_factory=list)
    output_dir: Path | None = None


def count_iterations_to_convergence(trace: FicTrace, tol: float) -> int:
    """First iteration from which every recorded relative change stays below tol.

    Returns the trace length when the last recorded change is still at or
    above tol (the run never converged at this tolerance); callers can
    detect that case by comparing against ``len(trace)``.
    """
    fics = trace.fics
    if not fics:
        raise ValueError("trace must be non-empty")
    last_above = 0
    for t in range(1, len(fics)):
        if abs(fics[t] - fics[t - 1]) >= tol * abs(fics[t - 1]):
            last_above = t
    if last_above == len(fics) - 1 and len(fics) > 1:
        return len(fics)
    return max(last_above + 1, 1)


def run_learner(
    name: str,
    data: Dataset,
    init: MixtureModel,
    config: ExperimentConfig,
    order_seed: int,
) -> tuple[MixtureModel, FicTrace]:
    """Dispatch one learner with the experiment's settings."""
    if name == "em_batch":
        return fit_batch_em(data, init, tol=config.tol, max_iters=config.max_iters)
    if name == "em_online":
        return fit_incremental_em(
            data, init, mode=config.mode, tol=config.tol,
            max_sweeps=config.max_iters, order_seed=order_seed,
        )
    cfg = FabConfig(
        d_component=component_dof(data.dim),
        prune_threshold=config.prune_threshold,
        inner_v_iters=config.inner_v_iters,
        tol=config.tol,
        max_iters=config.max_iters,
    )
    if name == "fab_batch":
        return fit_fab_batch(data, init, cfg)
    if name == "fab_online":
        return fit_fab_online(data, init, cfg, order_seed=order_seed, mode=config.mode)
    raise ValueError(f"unknown learner {name!r}")


def _padded(values: list[float], length: int) -> list[float]:
    return values + [values[-1]] * (length - len(values))


def run_experiment(config: ExperimentConfig) -> RaceSummary:
    """Execute the full protocol and write per-run and aggregate CSV files.

    Layout under ``output_dir/name/``: one
    ``<learner>_n<N>_d<D>_s<seed>.csv`` trace per run, ``summary.csv``,
    ``failures.csv``, and one ``panel_n<N>_d<D>.csv`` per cell holding
    iteration-vs-mean-score series, one column per learner.
    """
    out = Path(config.output_dir) / config.name
    out.mkdir(parents=True, exist_ok=True)
    summary = RaceSummary(output_dir=out)
    collected: dict[tuple[str, int, int], list[FicTrace]] = {
        (learner, n, dim): []
        for learner in config.learners
        for n in config.n_values
        for dim in config.dim_values
    }

    for n_index, n in enumerate(config.n_values):
        for dim_index, dim in enumerate(config.dim_values):
            for rep in range(config.repetitions):
                truth_seed, data_seed, init_seed, order_seed = config.cell_seeds(
                    n_index, dim_index, rep
                )
                spec = GeneratorSpec(
                    n=n,
                    k_true=config.k_true,
                    weights=config.weights,
                    dim=dim,
                    mean_scale=config.mean_scale,
                    cov_scale=config.cov_scale,
                    seed=truth_seed,
                )
                truth = sample_ground_truth(spec)
                data, _ = sample_dataset(truth, n, data_seed)
                init = default_init(data, config.k_init, init_seed)
                data_hash = hashlib.sha256(data.points.tobytes()).hexdigest()
                init_hash = hashlib.sha256(checkpoint_document(init).encode()).hexdigest()
                rep_seed = config.rep_entropy(rep)
                for learner in config.learners:
                    try:
                        model, trace = run_learner(learner, data, init, config, order_seed)
                    except MixtureError as err:
                        summary.failures.append((learner, n, dim, rep_seed, str(err)))
                        continue
                    trace.to_csv(
                        out / f"{learner}_n{n}_d{dim}_s{rep_seed}.csv",
                        comments=(f"data_sha256={data_hash} init_sha256={init_hash}",),
                    )
                    summary.runs.append(RunResult(learner, n, dim, rep_seed, trace, model))
                    collected[(learner, n, dim)].append(trace)

    for (learner, n, dim), traces in collected.items():
        if not traces:
            continue
        longest = max(len(t) for t in traces)
        curves = np.array([_padded(t.fics, longest) for t in traces])
        iters = [count_iterations_to_convergence(t, config.tol) for t in traces]
        summary.cells[(learner, n, dim)] = CellSummary(
            learner=learner,
            n=n,
            dim=dim,
            mean_fic_per_iteration=[float(v) for v in curves.mean(axis=0)],
            mean_iters_to_converge=float(np.mean(iters)),
            mean_final_fic=float(np.mean([t.final.fic for t in traces])),
            repetitions_used=len(traces),
        )

    _write_summary_csv(out / "summary.csv", config, summary)
    _write_failures_csv(out / "failures.csv", summary)
    for n in config.n_values:
        for dim in config.dim_values:
            _write_panel_csv(out, config, summary, n, dim)
    return summary


def _write_summary_csv(path: Path, config: ExperimentConfig, summary: RaceSummary) -> None:
    lines = ["learner,n,dim,mean_iters_to_converge,mean_final_fic,repetitions_used"]
    for learner in config.learners:
        for n in config.n_values:
            for dim in config.dim_values:
                cell = summary.cells.get((learner, n, dim))
                if cell is None:
                    continue
                lines.append(
                    f"{learner},{n},{dim},{format_real(cell.mean_iters_to_converge)},"
                    f"{format_real(cell.mean_final_fic)},{cell.repetitions_used}"
                )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_failures_csv(path: Path, summary: RaceSummary) -> None:
    lines = ["learner,n,dim,seed,error"]
    for learner, n, dim, seed, error in summary.failures:
        sanitized = error.replace("\n", " ").replace(",", ";")
        lines.append(f"{learner},{n},{dim},{seed},{sanitized}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_panel_csv(out: Path, config: ExperimentConfig, summary: RaceSummary, n: int, dim: int) -> None:
    cells = [
        (learner, summary.cells[(learner, n, dim)])
        for learner in config.learners
        if (learner, n, dim) in summary.cells
    ]
    if not cells:
        return
    length = max(len(cell.mean_fic_per_iteration) for _, cell in cells)
    lines = ["iteration," + ",".join(learner for learner, _ in cells)]
    padded = {learner: _padded(cell.mean_fic_per_iteration, length) for learner, cell in cells}
    for it in range(length):
        row = ",".join(format_real(padded[learner][it]) for learner, _ in cells)
        lines.append(f"{it},{row}")
    (out / f"panel_n{n}_d{dim}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_config_file(path) -> ExperimentConfig:
    """Flat ``key = value`` text; '#' starts a comment.

    Lists are comma-separated (``n_values = 500, 10000``); learners and
    weights likewise. Unknown keys are rejected by name.
    """
    values: dict[str, object] = {}
    int_fields = {"k_true", "k_init", "repetitions", "max_iters", "inner_v_iters", "base_seed"}
    float_fields = {"mean_scale", "cov_scale", "tol", "prune_threshold"}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key in ("n_values", "dim_values", "seeds"):
                values[key] = [int(v) for v in value.split(",") if v.strip()]
            elif key == "weights":
                values[key] = tuple(float(v) for v in value.split(",") if v.strip())
            elif key == "learners":
                values[key] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key in int_fields:
                values[key] = int(value)
            elif key in float_fields:
                values[key] = float(value)
            elif key in ("output_dir", "name", "mode"):
                values[key] = value
            else:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
    if "n_values" not in values or "dim_values" not in values:
        raise ValueError(f"{path}: n_values and dim_values are required")
    return ExperimentConfig(**values)
