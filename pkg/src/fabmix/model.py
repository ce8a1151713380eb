"""Gaussian mixture state, batch EM, and exact log-likelihood.

The model keeps its parameters as stacked arrays (weights, means,
covariances) together with cached Cholesky factors, so both the batch
steps and the per-datum online updates can run vectorized over
components.
"""

from __future__ import annotations

import time

import numpy as np
from scipy.special import logsumexp

from .exceptions import DegenerateComponentError, DimensionError
from .gaussian import (
    CovarianceMatrix,
    GaussianComponent,
    log_densities,
    repair_covariances_batch,
)
from .trace import FicTrace

WEIGHT_SUM_TOL = 1e-9


def count_floor(dim: int) -> float:
    """Smallest usable soft count; divisions by N_k are guarded with it."""
    return max(1e-8, dim * 1e-6)


class Dataset:
    """An N x D matrix of finite observations."""

    def __init__(self, points: np.ndarray):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2:
            raise DimensionError(f"points must be 2-d, got shape {points.shape}")
        if points.shape[0] < 1:
            raise ValueError("dataset needs at least one row")
        if not np.all(np.isfinite(points)):
            raise ValueError("dataset contains non-finite entries")
        self.points = points
        self.n = points.shape[0]
        self.dim = points.shape[1]

    def __len__(self):
        return self.n


class MixtureModel:
    """Mixture parameters plus soft counts, with cached factorizations.

    Covariances are repaired (symmetrized, jittered if necessary) at
    construction; ``chols`` and ``log_dets`` always match ``covariances``.
    """

    def __init__(self, weights, means, covariances, soft_counts=None):
        weights = np.asarray(weights, dtype=np.float64).copy()
        means = np.asarray(means, dtype=np.float64).copy()
        covariances = np.asarray(covariances, dtype=np.float64).copy()
        n_comp = weights.shape[0]
        if n_comp < 1:
            raise ValueError("a mixture needs at least one component")
        if means.shape[0] != n_comp or covariances.shape[0] != n_comp:
            raise DimensionError("weights, means and covariances disagree on component count")
        if covariances.shape[1:] != (means.shape[1], means.shape[1]):
            raise DimensionError("covariance blocks must be D x D")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")
        if np.any(weights <= 0.0):
            raise ValueError("weights must be positive")
        self.weights = weights
        self.means = means
        self.covariances, self.chols, self.log_dets = repair_covariances_batch(covariances)
        if soft_counts is None:
            soft_counts = np.zeros(n_comp)
        self.soft_counts = np.asarray(soft_counts, dtype=np.float64).copy()

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[GaussianComponent]:
        """Read-only component views (weight, mean, covariance)."""
        return [
            GaussianComponent(
                float(self.weights[c]),
                self.means[c].copy(),
                CovarianceMatrix(
                    self.covariances[c].copy(),
                    self.chols[c].copy(),
                    float(self.log_dets[c]),
                ),
            )
            for c in range(self.n_components)
        ]

    def copy(self) -> "MixtureModel":
        dup = object.__new__(MixtureModel)
        dup.weights = self.weights.copy()
        dup.means = self.means.copy()
        dup.covariances = self.covariances.copy()
        dup.chols = self.chols.copy()
        dup.log_dets = self.log_dets.copy()
        dup.soft_counts = self.soft_counts.copy()
        return dup

    def set_covariances(self, raw: np.ndarray) -> None:
        """Replace all covariances at once, re-repairing and re-factorizing."""
        self.covariances, self.chols, self.log_dets = repair_covariances_batch(raw)

    def log_density_matrix(self, data: Dataset) -> np.ndarray:
        """(N, C) matrix of log N(x_n | mu_c, Sigma_c)."""
        if data.dim != self.dim:
            raise DimensionError(f"data dim {data.dim} != model dim {self.dim}")
        return log_densities(data.points, self.means, self.chols, self.log_dets)


class ResponsibilityTable:
    """Cached per-datum responsibilities and visit flags."""

    def __init__(self, gamma: np.ndarray, visited: np.ndarray | None = None):
        gamma = np.asarray(gamma, dtype=np.float64)
        if gamma.ndim != 2:
            raise DimensionError("gamma must be N x C")
        self.gamma = gamma
        if visited is None:
            visited = np.zeros(gamma.shape[0], dtype=bool)
        self.visited = np.asarray(visited, dtype=bool)

    @property
    def n(self) -> int:
        return self.gamma.shape[0]

    @property
    def n_components(self) -> int:
        return self.gamma.shape[1]

    def column_sums(self) -> np.ndarray:
        return self.gamma.sum(axis=0)

    def copy(self) -> "ResponsibilityTable":
        return ResponsibilityTable(self.gamma.copy(), self.visited.copy())


def _log_joint(model: MixtureModel, data: Dataset) -> np.ndarray:
    """log pi_c + log N(x_n | mu_c, Sigma_c) for all n, c."""
    return model.log_density_matrix(data) + np.log(model.weights)[None, :]


def batch_e_step(model: MixtureModel, data: Dataset) -> ResponsibilityTable:
    """Posterior responsibilities for every datum, log-sum-exp normalized."""
    log_joint = _log_joint(model, data)
    log_norm = logsumexp(log_joint, axis=1, keepdims=True)
    gamma = np.exp(log_joint - log_norm)
    return ResponsibilityTable(gamma, np.ones(data.n, dtype=bool))


def batch_m_step(data: Dataset, resp: ResponsibilityTable) -> MixtureModel:
    """Weighted-ML parameter estimates from a fully visited table.

    Raises
    ------
    DegenerateComponentError
        If any component's soft count falls below the count floor.
    """
    if not np.all(resp.visited):
        raise ValueError("batch M-step requires every row to be visited")
    X = data.points
    n, dim = X.shape
    counts = resp.column_sums()
    floor = count_floor(dim)
    if np.any(counts < floor):
        bad = int(np.argmin(counts))
        raise DegenerateComponentError(
            f"component {bad} holds soft count {counts[bad]:.3e} < floor {floor:.3e}"
        )
    weights = counts / n
    means = (resp.gamma.T @ X) / counts[:, None]
    covs = np.empty((resp.n_components, dim, dim))
    for c in range(resp.n_components):
        diff = X - means[c]
        covs[c] = (resp.gamma[:, c] * diff.T) @ diff / counts[c]
    return MixtureModel(weights, means, covs, soft_counts=counts)


def log_likelihood(model: MixtureModel, data: Dataset) -> float:
    """Exact mixture log-likelihood via log-sum-exp."""
    return float(logsumexp(_log_joint(model, data), axis=1).sum())


def default_init(data: Dataset, n_components: int, seed: int = 0) -> MixtureModel:
    """Deterministic default initialization.

    Means are ``n_components`` distinct data points drawn with the given
    seed, every covariance is the global data covariance, and weights
    are uniform.
    """
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if n_components > data.n:
        raise ValueError(f"cannot draw {n_components} distinct points from {data.n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    rows = rng.choice(data.n, size=n_components, replace=False)
    means = data.points[rows].copy()
    centered = data.points - data.points.mean(axis=0)
    global_cov = centered.T @ centered / data.n
    covs = np.repeat(global_cov[None, :, :], n_components, axis=0)
    weights = np.full(n_components, 1.0 / n_components)
    counts = np.full(n_components, data.n / n_components)
    return MixtureModel(weights, means, covs, soft_counts=counts)


def fit_batch_em(
    data: Dataset,
    init: MixtureModel,
    tol: float = 1e-6,
    max_iters: int = 100,
) -> tuple[MixtureModel, FicTrace]:
    """Full-batch EM until the relative log-likelihood change drops below tol.

    The trace's row 0 is the initial model's log-likelihood; row t the
    log-likelihood after iteration t. For this learner the ``fic``
    column carries the log-likelihood (its convergence metric).
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    model = init.copy()
    trace = FicTrace()
    start = time.perf_counter()
    ll = log_likelihood(model, data)
    trace.append(0, ll, ll, model.n_components, (time.perf_counter() - start) * 1e3)
    converged = False
    for iteration in range(1, max_iters + 1):
        resp = batch_e_step(model, data)
        try:
            model = batch_m_step(data, resp)
        except DegenerateComponentError as err:
            err.iteration = iteration
            raise
        new_ll = log_likelihood(model, data)
        trace.append(iteration, new_ll, new_ll, model.n_components, (time.perf_counter() - start) * 1e3)
        if abs(new_ll - ll) < tol * abs(ll):
            converged = True
            break
        ll = new_ll
    trace.meta["converged"] = converged
    return model, trace
