"""Seeded synthetic Gaussian-mixture generation.

Ground-truth models draw their means uniformly from a box and their
covariances from a Wishart-like construction A A^T + cov_scale I, which
is positive definite by construction. All randomness flows through
numpy's PCG64 generator seeded explicitly, so a (spec, seed) pair
reproduces bit-identical models and datasets; golden CSV files shipped
with the tests decouple downstream checks from RNG portability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Dataset, MixtureModel


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of one synthetic ground-truth mixture."""

    n: int
    k_true: int
    weights: tuple[float, ...]
    dim: int
    mean_scale: float = 10.0
    cov_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k_true != len(self.weights):
            raise ValueError("k_true must match the number of weights")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(self.weights)!r}")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        if self.n < self.k_true:
            raise ValueError("need at least one datum per true component")
        if self.mean_scale <= 0 or self.cov_scale <= 0:
            raise ValueError("scales must be positive")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")


def _spd_from_factor(a: np.ndarray, cov_scale: float) -> np.ndarray:
    return a @ a.T + cov_scale * np.eye(a.shape[0])


def sample_ground_truth(spec: GeneratorSpec) -> MixtureModel:
    """Draw a ground-truth model; deterministic in ``spec.seed``.

    Means are uniform in [-mean_scale, mean_scale]^D (one draw), then
    one D x D standard-normal factor per component, scaled by
    cov_scale / sqrt(D), builds each covariance as A A^T + cov_scale I.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    means = rng.uniform(-spec.mean_scale, spec.mean_scale, size=(spec.k_true, spec.dim))
    covs = np.empty((spec.k_true, spec.dim, spec.dim))
    scale = spec.cov_scale / np.sqrt(spec.dim)
    for c in range(spec.k_true):
        a = rng.standard_normal((spec.dim, spec.dim)) * scale
        covs[c] = _spd_from_factor(a, spec.cov_scale)
    weights = np.asarray(spec.weights, dtype=np.float64)
    return MixtureModel(weights, means, covs, soft_counts=weights * spec.n)


def sample_dataset(truth: MixtureModel, n: int, seed: int) -> tuple[Dataset, np.ndarray]:
    """Draw ``n`` points from ``truth``; labels are returned for diagnostics only.

    Component indices come from one categorical draw over the weights;
    each point is mean + L z with L the component's cached triangular
    factor and z one row of a single (n, D) standard-normal draw.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    labels = rng.choice(truth.n_components, size=n, p=truth.weights)
    z = rng.standard_normal((n, truth.dim))
    points = truth.means[labels] + np.einsum("nij,nj->ni", truth.chols[labels], z)
    return Dataset(points), labels
