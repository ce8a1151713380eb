"""Serialization: real formatting, model checkpoints, dataset CSV, learner state.

All reals are written with 17 significant digits, enough for a
bit-faithful float64 round trip, so identical runs produce identical
bytes on disk.
"""

from __future__ import annotations

import json

import numpy as np


def format_real(x: float) -> str:
    """Render a float with 17 significant digits (exact round trip)."""
    return f"{float(x):.17g}"


def _real_list(values) -> str:
    return "[" + ", ".join(format_real(v) for v in np.asarray(values).ravel()) + "]"


def _nested_real_list(rows) -> str:
    return "[" + ", ".join(_real_list(row) for row in rows) + "]"


def lower_triangle(matrix: np.ndarray) -> np.ndarray:
    """Row-major lower triangle of a symmetric matrix, length D*(D+1)/2."""
    dim = matrix.shape[0]
    idx = np.tril_indices(dim)
    return np.asarray(matrix)[idx]


def from_lower_triangle(values, dim: int) -> np.ndarray:
    full = np.zeros((dim, dim))
    idx = np.tril_indices(dim)
    full[idx] = values
    full = full + full.T - np.diag(np.diag(full))
    return full


CHECKPOINT_VERSION = 1


def checkpoint_document(model) -> str:
    """Canonical checkpoint text for a mixture model (valid JSON)."""
    covs = [lower_triangle(model.covariances[c]) for c in range(model.n_components)]
    parts = [
        f'"format_version": {CHECKPOINT_VERSION}',
        f'"dim": {model.dim}',
        f'"n_components": {model.n_components}',
        f'"weights": {_real_list(model.weights)}',
        f'"means": {_nested_real_list(model.means)}',
        f'"covariances": {_nested_real_list(covs)}',
        f'"soft_counts": {_real_list(model.soft_counts)}',
    ]
    return "{" + ", ".join(parts) + "}"


def save_checkpoint(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(checkpoint_document(model) + "\n")


def load_checkpoint(path):
    from .model import MixtureModel

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {doc.get('format_version')}")
    dim = int(doc["dim"])
    covs = np.stack([from_lower_triangle(row, dim) for row in doc["covariances"]])
    return MixtureModel(
        weights=np.asarray(doc["weights"], dtype=np.float64),
        means=np.asarray(doc["means"], dtype=np.float64),
        covariances=covs,
        soft_counts=np.asarray(doc["soft_counts"], dtype=np.float64),
    )


def save_dataset_csv(path, points: np.ndarray, labels=None) -> None:
    """Dataset CSV: header x0..x{D-1}[,label], one row per observation."""
    points = np.asarray(points, dtype=np.float64)
    dim = points.shape[1]
    header = ",".join(f"x{d}" for d in range(dim))
    if labels is not None:
        header += ",label"
    lines = [header]
    for i, row in enumerate(points):
        text = ",".join(format_real(v) for v in row)
        if labels is not None:
            text += f",{int(labels[i])}"
        lines.append(text)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset_csv(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read a dataset CSV; returns (points, labels_or_None)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        columns = header.split(",")
        has_labels = columns[-1] == "label"
        dim = len(columns) - 1 if has_labels else len(columns)
        if columns[:dim] != [f"x{d}" for d in range(dim)]:
            raise ValueError(f"unexpected dataset header: {header!r}")
        points, labels = [], []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            points.append([float(v) for v in fields[:dim]])
            if has_labels:
                labels.append(int(float(fields[dim])))
    pts = np.asarray(points, dtype=np.float64)
    return pts, (np.asarray(labels, dtype=np.int64) if has_labels else None)


def save_learner_state(path, model, resp=None, stats=None, accumulator=None) -> None:
    """Checkpoint a learner mid-run (model + responsibility table + stats).

    Enough to resume exactly: gamma table, sufficient statistics, and,
    for the online FAB learner, the accumulated data term with its
    per-datum cached contributions.
    """
    parts = [f'"model": {checkpoint_document(model)}']
    if resp is not None:
        parts.append(f'"gamma": {_nested_real_list(resp.gamma)}')
        parts.append(f'"visited": {json.dumps([bool(v) for v in resp.visited])}')
    if stats is not None:
        parts.append(f'"s0": {_real_list(stats.s0)}')
        parts.append(f'"s1": {_nested_real_list(stats.s1)}')
        parts.append(f'"s2": {_nested_real_list(s.reshape(-1) for s in stats.s2)}')
    if accumulator is not None:
        parts.append(f'"data_term": {format_real(accumulator.data_term)}')
        parts.append(f'"contributions": {_real_list(accumulator.contributions)}')
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("{" + ", ".join(parts) + "}\n")


def load_learner_state(path):
    """Load a learner state document back into a plain dict of arrays."""
    from .model import MixtureModel, ResponsibilityTable
    from .incremental import SufficientStats

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    model_doc = doc["model"]
    dim = int(model_doc["dim"])
    covs = np.stack([from_lower_triangle(row, dim) for row in model_doc["covariances"]])
    model = MixtureModel(
        weights=np.asarray(model_doc["weights"], dtype=np.float64),
        means=np.asarray(model_doc["means"], dtype=np.float64),
        covariances=covs,
        soft_counts=np.asarray(model_doc["soft_counts"], dtype=np.float64),
    )
    state = {"model": model}
    if "gamma" in doc:
        gamma = np.asarray(doc["gamma"], dtype=np.float64)
        visited = np.asarray(doc["visited"], dtype=bool)
        state["resp"] = ResponsibilityTable(gamma, visited)
    if "s0" in doc:
        n_comp = len(doc["s0"])
        s2 = np.asarray(doc["s2"], dtype=np.float64).reshape(n_comp, dim, dim)
        state["stats"] = SufficientStats(
            s0=np.asarray(doc["s0"], dtype=np.float64),
            s1=np.asarray(doc["s1"], dtype=np.float64),
            s2=s2,
        )
    if "data_term" in doc:
        state["data_term"] = float(doc["data_term"])
        state["contributions"] = np.asarray(doc["contributions"], dtype=np.float64)
    return state
