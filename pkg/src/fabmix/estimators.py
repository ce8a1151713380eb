"""Scikit-learn style estimators over the functional learners.

Four estimators share one surface: ``fit(X)`` runs the learner,
``predict_proba`` / ``predict`` evaluate posterior responsibilities at
the fitted parameters, ``score_samples`` the per-point log density, and
``score`` the mean log-likelihood. Hyperparameters live verbatim on the
instance (so ``get_params`` / ``set_params`` / ``clone`` work); fitted
state uses the usual trailing-underscore names.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .fic import FabConfig, component_dof, fit_fab_batch
from .incremental import fit_incremental_em
from .model import Dataset, batch_e_step, default_init, fit_batch_em
from .online import fit_fab_online


class _MixtureEstimatorBase(DensityMixin, BaseEstimator):
    def _as_dataset(self, X) -> Dataset:
        X = check_array(X, dtype=np.float64)
        return Dataset(X)

    def _store_fit(self, model, trace):
        self.model_ = model
        self.trace_ = trace
        self.weights_ = model.weights
        self.means_ = model.means
        self.covariances_ = model.covariances
        self.soft_counts_ = model.soft_counts
        self.n_components_ = model.n_components
        self.n_iter_ = len(trace) - 1
        self.converged_ = bool(trace.meta.get("converged", False))
        self.lower_bound_ = trace.final.fic
        return self

    def _check_input(self, X) -> Dataset:
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.model_.dim:
            raise ValueError(f"X has {X.shape[1]} features, model was fit with {self.model_.dim}")
        return Dataset(X)

    def predict_proba(self, X):
        """Posterior responsibilities of each sample under the fitted mixture."""
        data = self._check_input(X)
        return batch_e_step(self.model_, data).gamma

    def predict(self, X):
        """Most responsible component index per sample."""
        return self.predict_proba(X).argmax(axis=1)

    def score_samples(self, X):
        """Log density of each sample under the fitted mixture."""
        data = self._check_input(X)
        log_joint = self.model_.log_density_matrix(data) + np.log(self.model_.weights)
        return logsumexp(log_joint, axis=1)

    def score(self, X, y=None):
        """Mean log-likelihood of ``X``."""
        return float(self.score_samples(X).mean())


class GaussianMixtureEM(_MixtureEstimatorBase):
    """Full-batch EM for a Gaussian mixture."""

    def __init__(self, n_components=1, tol=1e-6, max_iter=100, init_seed=0):
        self.n_components = n_components
        self.tol = tol
        self.max_iter = max_iter
        self.init_seed = init_seed

    def fit(self, X, y=None):
        data = self._as_dataset(X)
        init = default_init(data, self.n_components, self.init_seed)
        model, trace = fit_batch_em(data, init, tol=self.tol, max_iters=self.max_iter)
        return self._store_fit(model, trace)


class IncrementalGaussianMixtureEM(_MixtureEstimatorBase):
    """Per-datum (online) EM with cached responsibilities.

    ``mode`` selects the covariance update: "exact_stats" maintains
    exact sufficient statistics, "paper_faithful" the damped rank-one
    recurrence.
    """

    def __init__(
        self,
        n_components=1,
        tol=1e-6,
        max_sweeps=100,
        mode="exact_stats",
        init_seed=0,
        order_seed=0,
    ):
        self.n_components = n_components
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.mode = mode
        self.init_seed = init_seed
        self.order_seed = order_seed

    def fit(self, X, y=None):
        data = self._as_dataset(X)
        init = default_init(data, self.n_components, self.init_seed)
        model, trace = fit_incremental_em(
            data,
            init,
            mode=self.mode,
            tol=self.tol,
            max_sweeps=self.max_sweeps,
            order_seed=self.order_seed,
        )
        return self._store_fit(model, trace)


class FabGaussianMixture(_MixtureEstimatorBase):
    """Batch FAB inference: EM-like updates with shrinkage and pruning.

    ``n_components`` is the initial count; the fitted ``n_components_``
    reflects what survived pruning.
    """

    def __init__(
        self,
        n_components=8,
        prune_threshold=0.01,
        inner_v_iters=3,
        tol=1e-6,
        max_iter=100,
        init_seed=0,
    ):
        self.n_components = n_components
        self.prune_threshold = prune_threshold
        self.inner_v_iters = inner_v_iters
        self.tol = tol
        self.max_iter = max_iter
        self.init_seed = init_seed

    def _config(self, dim) -> FabConfig:
        return FabConfig(
            d_component=component_dof(dim),
            prune_threshold=self.prune_threshold,
            inner_v_iters=self.inner_v_iters,
            tol=self.tol,
            max_iters=self.max_iter,
        )

    def fit(self, X, y=None):
        data = self._as_dataset(X)
        init = default_init(data, self.n_components, self.init_seed)
        model, trace = fit_fab_batch(data, init, self._config(data.dim))
        return self._store_fit(model, trace)


class OnlineFabGaussianMixture(FabGaussianMixture):
    """Online FAB: per-datum shrinkage updates with a running FIC."""

    def __init__(
        self,
        n_components=8,
        prune_threshold=0.01,
        inner_v_iters=3,
        tol=1e-6,
        max_iter=100,
        init_seed=0,
        order_seed=0,
        mode="exact_stats",
    ):
        super().__init__(
            n_components=n_components,
            prune_threshold=prune_threshold,
            inner_v_iters=inner_v_iters,
            tol=tol,
            max_iter=max_iter,
            init_seed=init_seed,
        )
        self.order_seed = order_seed
        self.mode = mode

    def fit(self, X, y=None):
        data = self._as_dataset(X)
        init = default_init(data, self.n_components, self.init_seed)
        model, trace = fit_fab_online(
            data,
            init,
            self._config(data.dim),
            order_seed=self.order_seed,
            mode=self.mode,
        )
        return self._store_fit(model, trace)
