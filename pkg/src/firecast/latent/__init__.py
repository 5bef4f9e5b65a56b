from .blocks import (
    Bym2Block,
    FixedGaussian,
    IidBlock,
    Rw1Block,
    ScaledIcar,
    bin_covariate,
    build_icar_scaled,
    bym2_augmented_precision,
    bym2_covariance,
    bym2_precision,
    group_index,
    group_kron,
    icar_structure,
    rw1_structure,
)
from .grid import FitResult, GridConfig, HyperPoint, credible_interval, hyper_grid, latent_marginals
from .hurdle import Cells, Geography, HurdleConfig, HurdleModel, assemble
from .laplace import GaussianApprox, LaplaceResult, laplace_fit
from .model import Design, DesignBuilder, LatentModel, Likelihood
from .predictive import PosteriorPredictive, posterior_predictive, sample_hurdle
from .priors import Hyper, Prior

__all__ = [
    "Bym2Block",
    "Cells",
    "Design",
    "DesignBuilder",
    "FitResult",
    "FixedGaussian",
    "GaussianApprox",
    "Geography",
    "GridConfig",
    "HurdleConfig",
    "HurdleModel",
    "Hyper",
    "HyperPoint",
    "IidBlock",
    "LaplaceResult",
    "LatentModel",
    "Likelihood",
    "PosteriorPredictive",
    "Prior",
    "Rw1Block",
    "ScaledIcar",
    "assemble",
    "bin_covariate",
    "build_icar_scaled",
    "bym2_augmented_precision",
    "bym2_covariance",
    "bym2_precision",
    "credible_interval",
    "group_index",
    "group_kron",
    "hyper_grid",
    "icar_structure",
    "laplace_fit",
    "latent_marginals",
    "posterior_predictive",
    "rw1_structure",
    "sample_hurdle",
]
