"""Theory-based residual networks (TB-ResNet) for discrete choice analysis."""

from tbresnet.dataset import ChoiceDataset, SyntheticTruth, generate_synthetic, load_csv, save_csv, split, standardize
from tbresnet.dcm import DcmSpec, HdParams, MnlParams, PtParams
from tbresnet.metrics import MetricReport, elasticity, elasticity_table, empirical_rademacher, evaluate
from tbresnet.model import (DEFAULT_DELTA_GRID, REDUCED_DELTA_GRID, DnnConfig, SweepResult, TbResNetModel,
                            sweep, train_dnn, train_sequential, train_simultaneous)
from tbresnet.robustness import PerturbationReport, fgsm, gaussian_noise, robustness_curve, tgsm
from tbresnet.surface import SurfaceGrid, utility_grid, utility_slice

__all__ = [
    "ChoiceDataset", "SyntheticTruth", "generate_synthetic", "load_csv", "save_csv", "split", "standardize",
    "DcmSpec", "HdParams", "MnlParams", "PtParams",
    "MetricReport", "elasticity", "elasticity_table", "empirical_rademacher", "evaluate",
    "DEFAULT_DELTA_GRID", "REDUCED_DELTA_GRID", "DnnConfig", "SweepResult", "TbResNetModel",
    "sweep", "train_dnn", "train_sequential", "train_simultaneous",
    "PerturbationReport", "fgsm", "gaussian_noise", "robustness_curve", "tgsm",
    "SurfaceGrid", "utility_grid", "utility_slice",
]
