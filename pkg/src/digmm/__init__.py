"""Anomaly detection with Gaussian mixtures and a discriminatively learned boundary.

The mixture is fitted by EM on normal data. Each sample is then mapped to its
vector of component densities, and a one-class SVM learns the weights and
offset of the boundary ``<w, p(x)> = rho`` in that feature space. The plain
density-threshold detector is kept alongside for comparison.
"""

from .dataio import Dataset, ScenarioSpec, generate_scenario, paper_like_spec, read_csv, read_model, write_model
from .detector import (
    DigmmModel,
    ThresholdGmmModel,
    Verdict,
    baseline_decision,
    classify,
    decision_value,
    fit_digmm,
    fit_threshold_gmm,
)
from .featmap import feature_vectors, gram_matrix
from .gaussian import GaussianComponent
from .gmm import EmConfig, GmmParams, fit_em, log_likelihood, mixture_log_pdf
from .ocsvm import OcsvmProblem, OcsvmSolution, solve_dual

__version__ = "0.1.0"
