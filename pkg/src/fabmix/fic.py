"""FIC lower bound and batch FAB inference with component pruning.

The score per model/table pair is

    J = sum_nc q_nc [log pi_c + log N(x_n | mu_c, Sigma_c)]
        - sum_c (D_c / 2) log(sum_n q_nc)
        - ((C - 1) / 2) log N
        - sum_nc q_nc log q_nc          (0 log 0 := 0)

with D_c the per-component free-parameter count (mean plus full
covariance). The V-step multiplies responsibilities by the shrinkage
factor exp(-D_c / (2 N_c)), which starves underused components until
they fall below the pruning threshold.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, xlogy

from .exceptions import DegenerateComponentError, DegenerateComponentWarning
from .model import (
    Dataset,
    MixtureModel,
    ResponsibilityTable,
    _log_joint,
    batch_e_step,
    batch_m_step,
    log_likelihood,
)
from .trace import FicTrace


def component_dof(dim: int) -> int:
    """Free parameters of one Gaussian component: mean + full covariance."""
    return dim + dim * (dim + 1) // 2


@dataclass
class FabConfig:
    """Knobs of FAB inference.

    ``d_component`` is normally :func:`component_dof` of the data
    dimension; 0 switches shrinkage off entirely, which reduces FAB to
    plain EM (useful as a consistency anchor, so 0 is allowed here even
    though it disables model selection). Likewise ``prune_threshold``
    may be 0 to disable pruning.
    """

    d_component: int
    prune_threshold: float = 0.01
    inner_v_iters: int = 3
    tol: float = 1e-6
    max_iters: int = 100

    def __post_init__(self):
        if self.d_component < 0:
            raise ValueError("d_component must be >= 0")
        if not 0.0 <= self.prune_threshold < 1.0:
            raise ValueError("prune_threshold must lie in [0, 1)")
        if self.inner_v_iters < 1:
            raise ValueError("inner_v_iters must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    @classmethod
    def for_dim(cls, dim: int, **kwargs) -> "FabConfig":
        return cls(d_component=component_dof(dim), **kwargs)

    def validate_against(self, n_components: int) -> None:
        if self.prune_threshold >= 1.0 / n_components:
            raise ValueError(
                f"prune_threshold {self.prune_threshold} >= 1/{n_components}; "
                "every component would be at risk from the start"
            )


def fic_lower_bound(
    model: MixtureModel, data: Dataset, resp: ResponsibilityTable, cfg: FabConfig
) -> float:
    """Evaluate the score above for the given parameters and table."""
    if not np.all(resp.visited):
        raise ValueError("fic_lower_bound requires a fully visited table")
    counts = resp.column_sums()
    if np.any(counts <= 0.0):
        bad = int(np.argmin(counts))
        raise DegenerateComponentError(f"live component {bad} has zero responsibility mass")
    q = resp.gamma
    data_term = float(np.sum(q * _log_joint(model, data)))
    entropy = -float(xlogy(q, q).sum())
    dof_penalty = 0.5 * cfg.d_component * float(np.log(counts).sum())
    mixing_penalty = 0.5 * (model.n_components - 1) * np.log(data.n)
    return data_term - dof_penalty - mixing_penalty + entropy


def _shrink_exponents(cfg: FabConfig, counts: np.ndarray) -> np.ndarray:
    if cfg.d_component == 0:
        return np.zeros_like(counts)
    with np.errstate(divide="ignore"):
        return -cfg.d_component / (2.0 * counts)


def fab_v_step(
    model: MixtureModel, data: Dataset, resp: ResponsibilityTable, cfg: FabConfig
) -> ResponsibilityTable:
    """Shrinkage-weighted responsibility update, iterated ``inner_v_iters`` times.

    Each inner pass recomputes every row against the column sums of the
    previous pass, so the table moves toward the fixed point of

        q_nc ∝ pi_c N(x_n | mu_c, Sigma_c) exp(-D_c / (2 N_c)).
    """
    log_joint = _log_joint(model, data)
    counts = resp.column_sums()
    gamma = resp.gamma
    for _ in range(cfg.inner_v_iters):
        logits = log_joint + _shrink_exponents(cfg, counts)[None, :]
        row_max = logits.max(axis=1)
        dead_rows = ~np.isfinite(row_max)
        if np.any(dead_rows):
            warnings.warn(
                f"{int(dead_rows.sum())} row(s) lost all responsibility mass; flooring to uniform",
                DegenerateComponentWarning,
                stacklevel=2,
            )
            logits[dead_rows] = 0.0
        gamma = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
        counts = gamma.sum(axis=0)
    return ResponsibilityTable(gamma, np.ones(data.n, dtype=bool))


def prune_components(
    model: MixtureModel, resp: ResponsibilityTable, cfg: FabConfig
) -> tuple[MixtureModel, ResponsibilityTable, list[int]]:
    """Remove every component whose count share drops below the threshold.

    Weights of the survivors are renormalized once, after all removals;
    responsibility rows are renormalized over the survivors and the
    model's soft counts refreshed from the new column sums. The last
    component is never pruned: if all fall below the threshold, the one
    with the largest count is kept.
    """
    counts = resp.column_sums()
    n = resp.n
    share = counts / n
    doomed = np.nonzero(share < cfg.prune_threshold)[0]
    if len(doomed) == model.n_components:
        doomed = doomed[doomed != int(np.argmax(counts))]
    if len(doomed) == 0:
        return model, resp, []
    keep = np.setdiff1d(np.arange(model.n_components), doomed)
    weights = model.weights[keep]
    weights = weights / weights.sum()
    gamma = resp.gamma[:, keep]
    row_sums = gamma.sum(axis=1)
    starved = row_sums <= 0.0
    if np.any(starved):
        warnings.warn(
            f"{int(starved.sum())} row(s) held all mass on pruned components; reset to uniform",
            DegenerateComponentWarning,
            stacklevel=2,
        )
        gamma[starved] = 1.0 / len(keep)
        row_sums[starved] = 1.0
    gamma = gamma / row_sums[:, None]
    new_resp = ResponsibilityTable(gamma, resp.visited.copy())
    new_model = MixtureModel(
        weights,
        model.means[keep],
        model.covariances[keep],
        soft_counts=new_resp.column_sums(),
    )
    return new_model, new_resp, [int(c) for c in doomed]


def fit_fab_batch(
    data: Dataset, init: MixtureModel, cfg: FabConfig
) -> tuple[MixtureModel, FicTrace]:
    """Batch FAB: V-step, prune, M-step until the FIC change drops below tol.

    Trace row 0 scores the initial model against its plain E-step table;
    row t the state after full iteration t.
    """
    cfg.validate_against(init.n_components)
    model = init.copy()
    trace = FicTrace()
    start = time.perf_counter()
    resp = batch_e_step(model, data)
    model.soft_counts = resp.column_sums()
    fic = fic_lower_bound(model, data, resp, cfg)
    trace.append(0, fic, log_likelihood(model, data), model.n_components,
                 (time.perf_counter() - start) * 1e3)
    converged = False
    for iteration in range(1, cfg.max_iters + 1):
        resp = fab_v_step(model, data, resp, cfg)
        model, resp, _ = prune_components(model, resp, cfg)
        try:
            model = batch_m_step(data, resp)
        except DegenerateComponentError as err:
            err.iteration = iteration
            raise
        new_fic = fic_lower_bound(model, data, resp, cfg)
        trace.append(iteration, new_fic, log_likelihood(model, data), model.n_components,
                     (time.perf_counter() - start) * 1e3)
        if abs(new_fic - fic) < cfg.tol * abs(fic):
            converged = True
            break
        fic = new_fic
    trace.meta["converged"] = converged
    return model, trace
