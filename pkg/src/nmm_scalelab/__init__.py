"""Scaling-law estimation for native multimodal models from training-run logs."""

from .core import (Arch, AssignmentTable, Dataset, EvalSet, FrontierLaws, FrontierSource, LossSurfaceFit,
                   PowerLawFit, RunRecord, SparseLossSurfaceFit)
from .errors import ScaleLabError
from .fitloss import FitConfig, fit, predict_loss
from .flops import early_flops, late_flops, moe_flops, run_flops
from .frontier import closed_form_frontier, regress_frontier
from .hull import compute_law_from_records, frontier_points
from .ingest import load_fit, load_fixture, load_runs, save_fit
from .metrics import Evaluation, evaluate
from .resample import BootstrapSummary, bootstrap
from .sparse import SparseFitConfig, fit_sparse
from .specialization import entropy_specialization, layer_scores, uniform_deviation_specialization

__version__ = "0.1.0"

__all__ = [
    "Arch", "AssignmentTable", "BootstrapSummary", "Dataset", "EvalSet", "Evaluation", "FitConfig",
    "FrontierLaws", "FrontierSource", "LossSurfaceFit", "PowerLawFit", "RunRecord", "ScaleLabError",
    "SparseFitConfig", "SparseLossSurfaceFit", "bootstrap", "closed_form_frontier", "compute_law_from_records",
    "early_flops", "entropy_specialization", "evaluate", "fit", "fit_sparse", "frontier_points", "late_flops",
    "layer_scores", "load_fit", "load_fixture", "load_runs", "moe_flops", "predict_loss", "regress_frontier",
    "run_flops", "save_fit", "uniform_deviation_specialization",
]
