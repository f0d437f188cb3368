"""predMOB forests for identifying treatment-effect modifiers, with
confounder adjustment for observational data."""

from predmob.data import CaseWeights, Dataset, effect_code, load_csv, save_csv
from predmob.adjustment import AdjustmentPlan, build_plan
from predmob.tree import PredMobTree, TreeConfig, grow_tree, fit_palm
from predmob.forest import ForestConfig, PredMobForest, fit_forest

__all__ = [
    "AdjustmentPlan",
    "CaseWeights",
    "Dataset",
    "ForestConfig",
    "PredMobForest",
    "PredMobTree",
    "TreeConfig",
    "build_plan",
    "effect_code",
    "fit_forest",
    "fit_palm",
    "grow_tree",
    "load_csv",
    "save_csv",
]
