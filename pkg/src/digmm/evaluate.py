"""Scoring, ROC/threshold metrics and decision-grid export.

Normal (label 1) is the positive class throughout: ``tpr_at_zero`` is the
share of normal points kept as normal, ``fpr_at_zero`` the share of anomalies
let through. Balanced accuracy is the mean of TPR and TNR.
"""

from dataclasses import asdict, dataclass
import csv

import numpy as np
from scipy.stats import rankdata

from .detector import DigmmModel, ThresholdGmmModel, decision_value, score
from .errors import DimensionMismatch, DimensionNotTwo, MissingLabels, SingleClass
from .gmm import GmmParams, mixture_log_pdf


@dataclass(frozen=True)
class EvalReport:
    auc: float
    tpr_at_zero: float
    fpr_at_zero: float
    best_threshold_accuracy: float
    n_eval: int

    @property
    def balanced_accuracy_at_zero(self):
        return 0.5 * (self.tpr_at_zero + 1.0 - self.fpr_at_zero)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class DecisionGrid:
    """Scores on a regular lattice; ``values[i, j]`` sits at ``(xs[j], ys[i])``."""

    x_range: tuple
    y_range: tuple
    values: np.ndarray

    @property
    def resolution(self):
        return self.values.shape[0]

    @property
    def xs(self):
        return np.linspace(self.x_range[0], self.x_range[1], self.resolution)

    @property
    def ys(self):
        return np.linspace(self.y_range[0], self.y_range[1], self.resolution)

    def nodes(self):
        """``(resolution**2, 2)`` node coordinates in row-major order."""
        gx, gy = np.meshgrid(self.xs, self.ys)
        return np.column_stack([gx.ravel(), gy.ravel()])


def _model_dim(model):
    gmm = model if isinstance(model, GmmParams) else model.gmm
    return gmm.d


def score_dataset(model, data):
    """Per-row scores (``> 0`` normal) and the dataset labels."""
    if data.labels is None:
        raise MissingLabels("evaluation needs a labelled dataset")
    if data.n == 0:
        return np.empty(0), np.empty(0, dtype=int)
    if data.d != _model_dim(model):
        raise DimensionMismatch(
            f"data has dimension {data.d}, model expects {_model_dim(model)}"
        )
    return np.asarray(score(model, data.points), dtype=float), data.labels


def _check_classes(labels):
    labels = np.asarray(labels).astype(int)
    pos = labels == 1
    if pos.all() or not pos.any():
        raise SingleClass("both normal and anomalous labels are required")
    return pos


def roc_auc(scores, labels):
    """Mann-Whitney AUC with ties counted one half."""
    scores = np.asarray(scores, dtype=float)
    pos = _check_classes(labels)
    n_pos, n_neg = pos.sum(), (~pos).sum()
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def balanced_accuracy(scores, labels, threshold=0.0):
    scores = np.asarray(scores, dtype=float)
    pos = _check_classes(labels)
    pred = scores > threshold
    return 0.5 * (pred[pos].mean() + (~pred[~pos]).mean())


def best_threshold_accuracy(scores, labels):
    """Largest balanced accuracy of the rule ``score > t`` over every cut.

    Cuts sit between consecutive distinct scores, plus one below and one
    above all of them.
    """
    scores = np.asarray(scores, dtype=float)
    pos = _check_classes(labels)
    n_pos, n_neg = pos.sum(), (~pos).sum()
    order = np.argsort(scores, kind="stable")
    s, p = scores[order], pos[order]
    # Cutting after index k puts s[:k+1] on the anomalous side.
    last_of_run = np.r_[s[1:] != s[:-1], True]
    below_pos = np.cumsum(p)[last_of_run]
    below_neg = np.cumsum(~p)[last_of_run]
    tpr = np.r_[1.0, 1.0 - below_pos / n_pos]
    tnr = np.r_[0.0, below_neg / n_neg]
    return float(np.max(0.5 * (tpr + tnr)))


def evaluate(model, data):
    scores, labels = score_dataset(model, data)
    pos = _check_classes(labels)
    pred = scores > 0
    return EvalReport(
        auc=roc_auc(scores, labels),
        tpr_at_zero=float(pred[pos].mean()),
        fpr_at_zero=float(pred[~pos].mean()),
        best_threshold_accuracy=best_threshold_accuracy(scores, labels),
        n_eval=int(scores.size),
    )


def compare(digmm_report, baseline_report):
    """DiGMM minus baseline for the headline metrics."""
    return {
        "auc_delta": digmm_report.auc - baseline_report.auc,
        "balanced_accuracy_delta": digmm_report.balanced_accuracy_at_zero
        - baseline_report.balanced_accuracy_at_zero,
        "balanced_accuracy_vs_baseline_ceiling": digmm_report.balanced_accuracy_at_zero
        - baseline_report.best_threshold_accuracy,
    }


def grid_score(model, points):
    """What a contour plot shows: f(x) for DiGMM, log-density otherwise."""
    if isinstance(model, DigmmModel):
        return decision_value(model, points)
    gmm = model.gmm if isinstance(model, ThresholdGmmModel) else model
    return mixture_log_pdf(gmm, points)


def decision_grid(model, x_range, y_range, resolution=200):
    if _model_dim(model) != 2:
        raise DimensionNotTwo(f"grids need a 2-D model, got d={_model_dim(model)}")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    x_range = (float(x_range[0]), float(x_range[1]))
    y_range = (float(y_range[0]), float(y_range[1]))
    empty = DecisionGrid(x_range, y_range, np.empty((resolution, resolution)))
    values = np.asarray(grid_score(model, empty.nodes()), dtype=float)
    values = values.reshape(resolution, resolution)
    values.setflags(write=False)
    return DecisionGrid(x_range, y_range, values)


def write_grid_csv(grid, sink):
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["x", "y", "value"])
    for (x, y), v in zip(grid.nodes(), grid.values.ravel()):
        writer.writerow([repr(float(x)), repr(float(y)), repr(float(v))])


def read_grid_csv(source):
    reader = csv.reader(source)
    header = next(reader)
    if header != ["x", "y", "value"]:
        raise ValueError(f"unexpected grid header {header}")
    rows = np.array([[float(c) for c in r] for r in reader if r])
    res = int(round(np.sqrt(rows.shape[0])))
    if res * res != rows.shape[0]:
        raise ValueError("grid CSV does not hold a square lattice")
    xs, ys = rows[:res, 0], rows[::res, 1]
    values = rows[:, 2].reshape(res, res)
    return DecisionGrid((xs[0], xs[-1]), (ys[0], ys[-1]), values)


def crossing_cells(grid):
    """Cells whose four corners include both a normal and an anomalous score."""
    v = grid.values > 0
    corners = np.stack([v[:-1, :-1], v[:-1, 1:], v[1:, :-1], v[1:, 1:]])
    return corners.any(axis=0) & ~corners.all(axis=0)


def zero_level_is_closed(grid):
    """True when no node on the grid border scores normal.

    The normal region is then bounded inside the window and its zero level
    set is a closed curve.
    """
    v = grid.values
    border = np.r_[v[0], v[-1], v[:, 0], v[:, -1]]
    return bool(np.all(border <= 0)) and bool(np.any(v > 0))


def near_zero_level(grid, points, cells=1):
    """For each point, whether a zero-crossing cell lies within ``cells`` cells."""
    cross = crossing_cells(grid)
    res = grid.resolution
    dx = (grid.x_range[1] - grid.x_range[0]) / (res - 1)
    dy = (grid.y_range[1] - grid.y_range[0]) / (res - 1)
    out = []
    for x, y in np.atleast_2d(points):
        j = int(np.floor((x - grid.x_range[0]) / dx))
        i = int(np.floor((y - grid.y_range[0]) / dy))
        if not (0 <= i < res - 1 and 0 <= j < res - 1):
            out.append(False)
            continue
        lo_i, hi_i = max(0, i - cells), min(res - 1, i + cells + 1)
        lo_j, hi_j = max(0, j - cells), min(res - 1, j + cells + 1)
        out.append(bool(cross[lo_i:hi_i, lo_j:hi_j].any()))
    return np.array(out, dtype=bool)
