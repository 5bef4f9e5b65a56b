from .cv import CVResult, fold_assignment, fold_seed, superlearner_cv
from .ensemble import BoostConfig, TreeEnsemble, predict, train
from .losses import loss_grad_hess, poisson_deviance, tweedie_deviance, unit_deviance
from .shap import AttributionResult, mean_abs_shap, shap_values
from .tree import RegressionTree, grow_tree, split_gain

__all__ = [
    "AttributionResult",
    "BoostConfig",
    "CVResult",
    "RegressionTree",
    "TreeEnsemble",
    "fold_assignment",
    "fold_seed",
    "grow_tree",
    "loss_grad_hess",
    "mean_abs_shap",
    "poisson_deviance",
    "predict",
    "shap_values",
    "split_gain",
    "superlearner_cv",
    "train",
    "tweedie_deviance",
    "unit_deviance",
]
