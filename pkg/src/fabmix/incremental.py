"""Incremental (per-datum) EM with responsibility-change bookkeeping.

Each visit to a datum recomputes its responsibility row at the current
parameters, records the change ``delta`` against the cached row, folds
``delta`` into the soft counts, and updates the parameters in constant
time per datum.

Two covariance modes are supported:

* ``exact_stats`` (default) maintains the weighted sufficient statistics
  (s0, s1, s2) exactly, so the parameters always equal a batch M-step
  over the cached responsibility table.
* ``paper_faithful`` applies the damped rank-one covariance recurrence
  Sigma <- (1 - r) * (Sigma + r * d d^T) with r = delta / N_k, the form
  this update is usually quoted in; it is cheap but only approximates
  the exact statistics.

Weight and mean updates are algebraically identical in both modes.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from ._fast import (
    DEGENERATE_COUNT,
    HAVE_NUMBA,
    SINGULAR_COVARIANCE,
    sweep_exact_stats,
)
from .exceptions import (
    DegenerateComponentError,
    DegenerateComponentWarning,
    DimensionError,
    MixtureError,
    SingularCovarianceError,
)
from .gaussian import log_densities_single
from .model import (
    Dataset,
    MixtureModel,
    batch_e_step,
    batch_m_step,
    count_floor,
    log_likelihood,
)
from .trace import FicTrace

MODES = ("exact_stats", "paper_faithful")


@dataclass
class ChangeRecord:
    """Per-datum responsibility refresh: new row and its zero-sum change."""

    datum_index: int
    delta: np.ndarray
    new_gamma: np.ndarray


@dataclass
class SufficientStats:
    """Responsibility-weighted moments: s0 = sum(g), s1 = sum(g x), s2 = sum(g x x^T)."""

    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    @classmethod
    def from_responsibilities(cls, data: Dataset, resp) -> "SufficientStats":
        gamma = resp.gamma
        s0 = gamma.sum(axis=0)
        s1 = gamma.T @ data.points
        s2 = np.einsum("nc,nd,ne->cde", gamma, data.points, data.points)
        return cls(s0, s1, s2)

    def copy(self) -> "SufficientStats":
        return SufficientStats(self.s0.copy(), self.s1.copy(), self.s2.copy())

    def update(self, x: np.ndarray, delta: np.ndarray) -> None:
        """Fold one datum's responsibility change into the moments."""
        self.s0 += delta
        self.s1 += delta[:, None] * x
        self.s2 += delta[:, None, None] * np.outer(x, x)

    def parameters(self, n_total: float):
        """(weights, means, raw covariances) implied by the statistics."""
        weights = self.s0 / n_total
        means = self.s1 / self.s0[:, None]
        covs = self.s2 / self.s0[:, None, None] - means[:, None, :] * means[:, :, None]
        return weights, means, covs


def _refresh_row(
    model: MixtureModel,
    x_n: np.ndarray,
    old_gamma: np.ndarray,
    datum_index: int,
    shrink: np.ndarray | None = None,
) -> ChangeRecord:
    """Shared row refresh; ``shrink`` holds optional per-component log factors."""
    x_n = np.asarray(x_n, dtype=np.float64)
    if x_n.shape != (model.dim,):
        raise DimensionError(f"datum has shape {x_n.shape}, model dimension is {model.dim}")
    old_gamma = np.asarray(old_gamma, dtype=np.float64)
    if abs(old_gamma.sum() - 1.0) > 1e-6:
        raise ValueError("old_gamma must be a normalized (visited) row")
    log_joint = log_densities_single(x_n, model.means, model.chols, model.log_dets)
    log_joint += np.log(model.weights)
    if shrink is not None:
        log_joint += shrink
    log_joint -= log_joint.max()
    new_gamma = np.exp(log_joint)
    new_gamma /= new_gamma.sum()
    return ChangeRecord(datum_index, new_gamma - old_gamma, new_gamma)


def e_incremental_step(
    model: MixtureModel,
    x_n: np.ndarray,
    old_gamma: np.ndarray,
    datum_index: int = 0,
) -> ChangeRecord:
    """Refresh one datum's responsibility row at the current parameters."""
    return _refresh_row(model, x_n, old_gamma, datum_index)


def update_soft_counts(counts: np.ndarray, delta: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """counts + delta, clamped at the count floor (with a warning on clamp)."""
    new = counts + delta
    low = new < floor
    if np.any(low):
        warnings.warn(
            f"soft count clamped at floor {floor:.1e} for component(s) {np.nonzero(low)[0].tolist()}",
            DegenerateComponentWarning,
            stacklevel=2,
        )
        new = np.where(low, floor, new)
    return new


def incremental_m_step(
    model: MixtureModel,
    x_n: np.ndarray,
    record: ChangeRecord,
    mode: str = "exact_stats",
    stats: SufficientStats | None = None,
    *,
    n_total: float,
) -> MixtureModel:
    """Constant-time parameter update after a responsibility change.

    ``model.soft_counts`` must already hold the post-change counts.
    Mutates ``model`` (and ``stats`` in exact_stats mode) in place and
    returns it.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    delta = record.delta
    floor = count_floor(model.dim)
    if mode == "exact_stats":
        if stats is None:
            raise ValueError("exact_stats mode requires a SufficientStats instance")
        stats.update(x_n, delta)
        if np.any(stats.s0 < floor):
            bad = int(np.argmin(stats.s0))
            raise DegenerateComponentError(
                f"component {bad} statistic s0={stats.s0[bad]:.3e} fell below floor {floor:.3e}"
            )
        weights, means, raw = stats.parameters(n_total)
        model.weights = weights
        model.means = means
        model.set_covariances(raw)
    else:
        counts = model.soft_counts
        if np.any(counts <= floor):
            bad = int(np.argmin(counts))
            raise DegenerateComponentError(
                f"component {bad} count {counts[bad]:.3e} at or below floor {floor:.3e}"
            )
        rate = delta / counts
        diff = x_n - model.means
        outer = diff[:, None, :] * diff[:, :, None]
        raw = (1.0 - rate)[:, None, None] * (model.covariances + rate[:, None, None] * outer)
        model.weights = model.weights + delta / n_total
        model.means = model.means + rate[:, None] * diff
        model.set_covariances(raw)
    return model


def _annotate(err: MixtureError, sweep: int, datum: int) -> MixtureError:
    if isinstance(err, DegenerateComponentError):
        err.sweep = sweep
        err.datum = datum
        err.args = (f"{err.args[0]} (sweep {sweep}, datum {datum})",)
        return err
    return type(err)(f"{err} (sweep {sweep}, datum {datum})")


ENGINES = ("auto", "numpy", "numba")


def resolve_engine(engine: str, mode: str) -> bool:
    """True when the fused numba sweep should run."""
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}; expected one of {ENGINES}")
    if engine == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("engine='numba' requested but numba is not installed")
        if mode != "exact_stats":
            raise ValueError("the fused sweep supports exact_stats mode only")
        return True
    return engine == "auto" and HAVE_NUMBA and mode == "exact_stats"


def run_fast_sweep(
    model: MixtureModel,
    stats: SufficientStats,
    gamma: np.ndarray,
    points: np.ndarray,
    order: np.ndarray,
    n_total: float,
    floor: float,
    shrink_dof: float = 0.0,
    entropies: np.ndarray | None = None,
) -> None:
    """Drive one fused sweep; mutates model/stats/gamma/entropies in place."""
    track = entropies is not None
    status, pos, clamps = sweep_exact_stats(
        points,
        order,
        model.weights,
        model.means,
        model.covariances,
        model.chols,
        model.log_dets,
        model.soft_counts,
        gamma,
        stats.s0,
        stats.s1,
        stats.s2,
        entropies if track else np.empty(0),
        n_total,
        floor,
        shrink_dof,
        track,
    )
    if clamps:
        warnings.warn(
            f"soft count clamped at floor {floor:.1e} {clamps} time(s) during sweep",
            DegenerateComponentWarning,
            stacklevel=3,
        )
    if status == DEGENERATE_COUNT:
        raise DegenerateComponentError(
            f"a component statistic fell below floor {floor:.3e}", datum=int(order[pos])
        )
    if status == SINGULAR_COVARIANCE:
        err = SingularCovarianceError("covariance not positive definite after jitter ladder")
        err.datum = int(order[pos])
        raise err


def fit_incremental_em(
    data: Dataset,
    init: MixtureModel,
    mode: str = "exact_stats",
    tol: float = 1e-6,
    max_sweeps: int = 100,
    order_seed: int = 0,
    engine: str = "auto",
) -> tuple[MixtureModel, FicTrace]:
    """Incremental EM over a fixed dataset.

    Row 0 of the trace is the initial model's log-likelihood; row 1 the
    state after the initialization sweep (one batch E+M pass that
    populates the responsibility cache); each later row is one full
    per-datum sweep in a seeded shuffled order.

    ``engine`` picks the per-datum execution path: "numpy" steps through
    the public operations, "numba" runs the fused sweep kernel, "auto"
    uses the kernel when available (exact_stats mode only).
    """
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be >= 1")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    fast = resolve_engine(engine, mode)
    rng = np.random.Generator(np.random.PCG64(order_seed))
    floor = count_floor(data.dim)
    n_total = float(data.n)
    start = time.perf_counter()

    trace = FicTrace()
    ll = log_likelihood(init, data)
    trace.append(0, ll, ll, init.n_components, (time.perf_counter() - start) * 1e3)

    resp = batch_e_step(init, data)
    model = batch_m_step(data, resp)
    stats = SufficientStats.from_responsibilities(data, resp) if mode == "exact_stats" else None
    new_ll = log_likelihood(model, data)
    trace.append(1, new_ll, new_ll, model.n_components, (time.perf_counter() - start) * 1e3)
    converged = abs(new_ll - ll) < tol * abs(ll)
    ll = new_ll

    gamma = resp.gamma
    points = data.points
    sweep = 1
    while not converged and sweep < max_sweeps:
        sweep += 1
        order = rng.permutation(data.n)
        if fast:
            try:
                run_fast_sweep(model, stats, gamma, points, order, n_total, floor)
            except MixtureError as err:
                datum = getattr(err, "datum", None)
                raise _annotate(err, sweep, -1 if datum is None else datum) from None
        else:
            for idx in order:
                x = points[idx]
                try:
                    rec = e_incremental_step(model, x, gamma[idx], datum_index=int(idx))
                    gamma[idx] = rec.new_gamma
                    model.soft_counts = update_soft_counts(model.soft_counts, rec.delta, floor)
                    incremental_m_step(model, x, rec, mode, stats, n_total=n_total)
                except MixtureError as err:
                    raise _annotate(err, sweep, int(idx)) from None
        new_ll = log_likelihood(model, data)
        trace.append(sweep, new_ll, new_ll, model.n_components, (time.perf_counter() - start) * 1e3)
        converged = abs(new_ll - ll) < tol * abs(ll)
        ll = new_ll
    trace.meta["converged"] = converged
    return model, trace
