"""The two detectors built on a fitted mixture.

* :class:`ThresholdGmmModel` flags a point when its mixture log-density falls
  to or below a single global threshold.
* :class:`DigmmModel` keeps the mixture components frozen, maps points to
  their component densities and learns a linear boundary ``<w, p(x)> = rho``
  in that feature space with a one-class SVM.

Both report a score where ``score > 0`` means normal.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .errors import Infeasible, InvariantViolation, NoConvergenceWarning
from .featmap import feature_vectors
from .gmm import EmConfig, GmmParams, fit_em, mixture_log_pdf, _points
from .ocsvm import OcsvmProblem, OcsvmSolution, solve_dual

NORMAL = "normal"
ANOMALOUS = "anomalous"


@dataclass(frozen=True)
class Verdict:
    score: float
    label: str

    @classmethod
    def from_score(cls, score):
        # A score of exactly zero is anomalous.
        return cls(float(score), NORMAL if score > 0 else ANOMALOUS)

    @property
    def is_normal(self):
        return self.label == NORMAL


@dataclass(frozen=True, eq=False)
class ThresholdGmmModel:
    gmm: GmmParams
    log_threshold: float
    fit_metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.log_threshold):
            raise InvariantViolation("log_threshold must be finite")

    kind = "threshold_gmm"


@dataclass(frozen=True, eq=False)
class DigmmModel:
    gmm: GmmParams
    svm: OcsvmSolution
    nu: float
    fit_metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        w = self.svm.weight_vector
        if w is None or np.shape(w) != (self.gmm.m,):
            raise InvariantViolation("weight vector length must equal the component count")
        if not np.all(np.isfinite(w)) or not math.isfinite(self.svm.rho):
            raise InvariantViolation("weight vector and rho must be finite")
        if not (0.0 < self.nu <= 1.0):
            raise InvariantViolation("nu must lie in (0, 1]")

    kind = "digmm"

    @property
    def weight_vector(self):
        return self.svm.weight_vector

    @property
    def rho(self):
        return self.svm.rho


def fit_digmm(data, m, nu, em_config=None, solver_tol=1e-6, max_passes=None):
    """Two-stage training: EM fit, feature map, one-class SVM.

    The mixture is never touched after EM. Labels on ``data`` are ignored.
    Solver non-convergence is recorded in ``fit_metadata`` rather than raised.
    """
    em_config = em_config or EmConfig()
    x = _points(data)
    if not (0.0 < nu <= 1.0):
        raise ValueError(f"nu must lie in (0, 1], got {nu}")
    # Fail before the expensive EM stage when the SVM cannot be feasible.
    if nu * x.shape[0] < 1.0 - 1e-12:
        raise Infeasible(f"nu * n = {nu * x.shape[0]:.6g} < 1")

    gmm, trace = fit_em(x, m, em_config)
    feats = feature_vectors(gmm, x)
    problem = OcsvmProblem.from_features(feats, nu)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoConvergenceWarning)
        svm = solve_dual(problem, tol=solver_tol, max_passes=max_passes)
    metadata = {
        "seed": em_config.seed,
        "n_init": em_config.n_init,
        "n_train": int(x.shape[0]),
        "em_restart": trace.restart_index,
        "em_iterations": trace.iterations,
        "em_converged": trace.converged,
        "log_likelihood": trace.final_log_likelihood,
        "solver_tol": solver_tol,
        "solver_status": svm.status,
        "solver_passes": svm.passes,
        "kkt_violation": svm.kkt_violation,
    }
    return DigmmModel(gmm, svm, nu, metadata)


def decision_value(model, x):
    """``<w, p(x)> - rho`` for one point or a batch."""
    feats = feature_vectors(model.gmm, x)
    return feats @ model.weight_vector - model.rho


def classify(model, x):
    return Verdict.from_score(decision_value(model, x))


def threshold_for_fpr(gmm, data, target_fpr):
    """Log threshold that flags a ``target_fpr`` fraction of ``data``.

    This is the ``target_fpr`` quantile of the training log-densities, with
    linear interpolation between order statistics.
    """
    if not (0.0 <= target_fpr <= 1.0):
        raise ValueError("target_fpr must lie in [0, 1]")
    return float(np.quantile(mixture_log_pdf(gmm, _points(data)), target_fpr))


def fit_threshold_gmm(data, m, em_config=None, log_threshold=None, target_fpr=None):
    """Fit the mixture and attach a log-density threshold.

    Give exactly one of ``log_threshold`` and ``target_fpr``.
    """
    if (log_threshold is None) == (target_fpr is None):
        raise ValueError("give exactly one of log_threshold and target_fpr")
    if log_threshold is not None and not math.isfinite(log_threshold):
        raise InvariantViolation("log_threshold must be finite")
    em_config = em_config or EmConfig()
    x = _points(data)
    gmm, trace = fit_em(x, m, em_config)
    if target_fpr is not None:
        log_threshold = threshold_for_fpr(gmm, x, target_fpr)
    metadata = {
        "seed": em_config.seed,
        "n_init": em_config.n_init,
        "n_train": int(x.shape[0]),
        "em_restart": trace.restart_index,
        "em_iterations": trace.iterations,
        "em_converged": trace.converged,
        "log_likelihood": trace.final_log_likelihood,
    }
    if target_fpr is not None:
        metadata["target_fpr"] = target_fpr
    return ThresholdGmmModel(gmm, float(log_threshold), metadata)


def baseline_score(model, x):
    return mixture_log_pdf(model.gmm, x) - model.log_threshold


def baseline_decision(model, x):
    return Verdict.from_score(baseline_score(model, x))


def score(model, x):
    """Native score of either detector; ``> 0`` means normal."""
    if isinstance(model, DigmmModel):
        return decision_value(model, x)
    if isinstance(model, ThresholdGmmModel):
        return baseline_score(model, x)
    raise TypeError(f"not a detector model: {type(model).__name__}")


def predict(model, x):
    """Boolean array, True where the point is judged normal."""
    return np.atleast_1d(score(model, x)) > 0
