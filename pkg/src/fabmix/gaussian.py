"""Multivariate-Gaussian log densities and covariance hygiene.

All density math lives in the log domain and goes through a cached
Cholesky factor; covariance matrices are symmetrized and, if needed,
jittered until they factorize.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import DimensionError, SingularCovarianceError

LOG_2PI = float(np.log(2.0 * np.pi))

# Jitter added to the diagonal is lambda = factor * trace/dim, smallest
# factor that lets the Cholesky succeed.
JITTER_FACTORS = (0.0, 1e-9, 1e-6, 1e-3)


def _log_det_from_chol(chol: np.ndarray) -> np.ndarray:
    """log|Sigma| = 2 * sum(log diag(L)); works on (..., D, D) stacks."""
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    return 2.0 * np.sum(np.log(diag), axis=-1)


@dataclass(frozen=True)
class CovarianceMatrix:
    """A symmetric positive-definite matrix with its cached lower factor.

    Immutable after construction; safe to share between threads.
    Build instances through :func:`repair_covariance`.
    """

    entries: np.ndarray
    chol: np.ndarray
    log_det: float
    dim: int = field(default=0)

    def __post_init__(self):
        if self.dim == 0:
            object.__setattr__(self, "dim", self.entries.shape[0])
        self.entries.setflags(write=False)
        self.chol.setflags(write=False)


@dataclass(frozen=True)
class GaussianComponent:
    """One mixture component: weight in (0, 1], mean vector, covariance."""

    weight: float
    mean: np.ndarray
    cov: CovarianceMatrix

    def __post_init__(self):
        if not 0.0 < self.weight <= 1.0:
            raise ValueError(f"component weight must lie in (0, 1], got {self.weight}")
        if self.mean.shape != (self.cov.dim,):
            raise DimensionError(
                f"mean has shape {self.mean.shape}, covariance is {self.cov.dim}x{self.cov.dim}"
            )
        self.mean.setflags(write=False)

    @property
    def log_det_cov(self) -> float:
        return self.cov.log_det


def repair_covariance(raw: np.ndarray) -> CovarianceMatrix:
    """Symmetrize ``raw`` and jitter its diagonal until it factorizes.

    The jitter ladder is ``lambda in {0, 1e-9, 1e-6, 1e-3} * trace/dim``;
    the smallest value that makes the Cholesky succeed wins.

    Raises
    ------
    SingularCovarianceError
        If the ladder is exhausted without a successful factorization.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise DimensionError(f"covariance must be square, got shape {raw.shape}")
    dim = raw.shape[0]
    sym = 0.5 * (raw + raw.T)
    scale = float(np.trace(sym)) / dim
    eye = np.eye(dim)
    for factor in JITTER_FACTORS:
        jitter = factor * scale
        entries = sym + jitter * eye if jitter != 0.0 else sym
        try:
            chol = np.linalg.cholesky(entries)
        except np.linalg.LinAlgError:
            continue
        return CovarianceMatrix(entries, chol, float(_log_det_from_chol(chol)))
    raise SingularCovarianceError(
        f"covariance not positive definite after jitter ladder (trace/dim={scale:.3e})"
    )


def log_pdf(x: np.ndarray, comp: GaussianComponent) -> float:
    """Log density of ``x`` under ``comp``, via the cached triangular factor."""
    x = np.asarray(x, dtype=np.float64)
    dim = comp.cov.dim
    if x.shape != (dim,):
        raise DimensionError(f"x has shape {x.shape}, component dimension is {dim}")
    z = solve_triangular(comp.cov.chol, x - comp.mean, lower=True)
    return float(-0.5 * (dim * LOG_2PI + comp.log_det_cov + z @ z))


def log_densities(X: np.ndarray, means: np.ndarray, chols: np.ndarray, log_dets: np.ndarray) -> np.ndarray:
    """Log N(x_n | mu_c, Sigma_c) for every row of ``X`` and every component.

    Parameters
    ----------
    X : (N, D) data matrix.
    means : (C, D) component means.
    chols : (C, D, D) lower Cholesky factors.
    log_dets : (C,) cached log determinants.

    Returns
    -------
    (N, C) matrix of log densities.
    """
    n, dim = X.shape
    n_comp = means.shape[0]
    out = np.empty((n, n_comp))
    base = dim * LOG_2PI
    for c in range(n_comp):
        z = solve_triangular(chols[c], (X - means[c]).T, lower=True)
        out[:, c] = -0.5 * (base + log_dets[c] + np.einsum("dn,dn->n", z, z))
    return out


def log_densities_single(x: np.ndarray, means: np.ndarray, chols: np.ndarray, log_dets: np.ndarray) -> np.ndarray:
    """Per-component log densities of a single point; hot path of the online loops."""
    diff = x - means
    z = np.linalg.solve(chols, diff[:, :, None])[:, :, 0]
    return -0.5 * (means.shape[1] * LOG_2PI + log_dets + np.einsum("cd,cd->c", z, z))


def trace_of_inverse_product(chol: np.ndarray, matrix: np.ndarray) -> float:
    """tr(Sigma^{-1} M) for Sigma = chol cholT, without forming the inverse of Sigma."""
    a = solve_triangular(chol, matrix, lower=True)
    b = solve_triangular(chol, np.eye(chol.shape[0]), lower=True)
    return float((a * b).sum())


def repair_covariances_batch(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Repair a (C, D, D) stack at once; falls back per matrix when needed.

    Returns (entries, chols, log_dets).
    """
    sym = 0.5 * (raw + np.transpose(raw, (0, 2, 1)))
    try:
        chols = np.linalg.cholesky(sym)
        return sym, chols, _log_det_from_chol(chols)
    except np.linalg.LinAlgError:
        pass
    n_comp, dim, _ = raw.shape
    entries = np.empty_like(sym)
    chols = np.empty_like(sym)
    log_dets = np.empty(n_comp)
    for c in range(n_comp):
        repaired = repair_covariance(sym[c])
        entries[c] = repaired.entries
        chols[c] = repaired.chol
        log_dets[c] = repaired.log_det
    return entries, chols, log_dets
