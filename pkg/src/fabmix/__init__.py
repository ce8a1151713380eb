"""Batch and online Gaussian-mixture learning with FIC-driven pruning."""

from .datagen import GeneratorSpec, sample_dataset, sample_ground_truth
from .estimators import (
    FabGaussianMixture,
    GaussianMixtureEM,
    IncrementalGaussianMixtureEM,
    OnlineFabGaussianMixture,
)
from .exceptions import (
    DegenerateComponentError,
    DegenerateComponentWarning,
    DimensionError,
    MixtureError,
    SingularCovarianceError,
)
from .experiment import (
    ExperimentConfig,
    RaceSummary,
    count_iterations_to_convergence,
    parse_config_file,
    run_experiment,
)
from .fic import FabConfig, component_dof, fab_v_step, fic_lower_bound, fit_fab_batch, prune_components
from .gaussian import CovarianceMatrix, GaussianComponent, log_pdf, repair_covariance
from .incremental import (
    ChangeRecord,
    SufficientStats,
    e_incremental_step,
    fit_incremental_em,
    incremental_m_step,
    update_soft_counts,
)
from .io import load_checkpoint, load_dataset_csv, save_checkpoint, save_dataset_csv
from .model import (
    Dataset,
    MixtureModel,
    ResponsibilityTable,
    batch_e_step,
    batch_m_step,
    default_init,
    fit_batch_em,
    log_likelihood,
)
from .online import (
    OnlineFicAccumulator,
    fic_online_accumulate,
    fit_fab_online,
    m_online_step,
    v_online_step,
)
from .trace import FicTrace

__all__ = [
    "ChangeRecord",
    "CovarianceMatrix",
    "Dataset",
    "DegenerateComponentError",
    "DegenerateComponentWarning",
    "DimensionError",
    "ExperimentConfig",
    "FabConfig",
    "FabGaussianMixture",
    "FicTrace",
    "GaussianComponent",
    "GaussianMixtureEM",
    "GeneratorSpec",
    "IncrementalGaussianMixtureEM",
    "MixtureError",
    "MixtureModel",
    "OnlineFabGaussianMixture",
    "OnlineFicAccumulator",
    "RaceSummary",
    "ResponsibilityTable",
    "SingularCovarianceError",
    "SufficientStats",
    "batch_e_step",
    "batch_m_step",
    "component_dof",
    "count_iterations_to_convergence",
    "default_init",
    "e_incremental_step",
    "fab_v_step",
    "fic_lower_bound",
    "fic_online_accumulate",
    "fit_batch_em",
    "fit_fab_batch",
    "fit_fab_online",
    "fit_incremental_em",
    "incremental_m_step",
    "load_checkpoint",
    "load_dataset_csv",
    "log_likelihood",
    "log_pdf",
    "m_online_step",
    "parse_config_file",
    "prune_components",
    "repair_covariance",
    "run_experiment",
    "sample_dataset",
    "sample_ground_truth",
    "save_checkpoint",
    "save_dataset_csv",
    "update_soft_counts",
    "v_online_step",
]

__version__ = "0.1.0"
