"""Datasets, the synthetic two-peak scenario, CSV ingestion and model files.

Model files are JSON documents. Python's float ``repr`` is the shortest
string that round-trips, so a saved model reloads bit-for-bit.
"""

from dataclasses import dataclass, field
import csv
import io
import json
import math

import numpy as np

from .detector import DigmmModel, ThresholdGmmModel
from .errors import (
    DigmmError,
    InvariantViolation,
    LengthMismatch,
    NonFiniteValue,
    ParseError,
    RaggedRows,
    RejectionStall,
    SchemaError,
    VersionError,
)
from .featmap import feature_vectors
from .gmm import GmmParams, mixture_log_pdf
from .ocsvm import BOUND_RTOL, OcsvmSolution

FORMAT_VERSION = "1"
NORMAL_LABEL = 1
ANOMALY_LABEL = 0


@dataclass(frozen=True, eq=False)
class Dataset:
    points: np.ndarray
    labels: np.ndarray = None
    feature_names: tuple = None

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1) if points.size else points.reshape(0, 1)
        if points.ndim != 2:
            raise ValueError(f"points must be a 2-D array, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise NonFiniteValue("dataset contains non-finite values")
        object.__setattr__(self, "points", points)
        if self.labels is not None:
            labels = np.array(self.labels, dtype=int).reshape(-1)
            if labels.size != points.shape[0]:
                raise LengthMismatch(f"{labels.size} labels for {points.shape[0]} points")
            if not np.all(np.isin(labels, (ANOMALY_LABEL, NORMAL_LABEL))):
                raise ValueError("labels must be 0 (anomalous) or 1 (normal)")
            object.__setattr__(self, "labels", labels)
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != points.shape[1]:
                raise ValueError("one feature name per column is required")
            object.__setattr__(self, "feature_names", names)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def normal_only(self):
        """Rows labelled normal; the dataset itself when unlabelled."""
        if self.labels is None:
            return self
        keep = self.labels == NORMAL_LABEL
        return Dataset(self.points[keep], self.labels[keep], self.feature_names)


# --------------------------------------------------------------------------
# synthetic scenario


@dataclass(frozen=True)
class Cluster:
    weight: float
    mean: tuple
    covariance: tuple


@dataclass(frozen=True)
class ScenarioSpec:
    """Normal peaks plus a box from which anomalies are rejection-sampled.

    A uniform draw from the box is kept as an anomaly when its score falls
    below the ``q`` quantile of the normal samples' scores. ``anomaly_rule``
    picks the score:

    ``"peak"``
        ``max_j log(p_j(x) / p_j(mu_j))``, the log-density relative to the
        peak of the nearest cluster in Mahalanobis terms. A point is
        anomalous when it is far out relative to *every* cluster, however
        tall that cluster's peak is.
    ``"mixture"``
        the mixture log-density itself.
    """

    clusters: tuple
    n_normal: int
    n_anomaly: int
    box_low: tuple
    box_high: tuple
    q: float = 0.001
    seed: int = 0
    anomaly_rule: str = "peak"

    def __post_init__(self):
        if not self.clusters:
            raise ValueError("scenario needs at least one cluster")
        if any(not c.weight > 0 for c in self.clusters):
            raise ValueError("cluster weights must be positive")
        low, high = np.asarray(self.box_low, float), np.asarray(self.box_high, float)
        for c in self.clusters:
            mean = np.asarray(c.mean, float)
            if mean.shape != low.shape or np.any(mean < low) or np.any(mean > high):
                raise ValueError("anomaly box must enclose every cluster mean")
        if not (0.0 < self.q < 1.0):
            raise ValueError("q must lie in (0, 1)")
        if self.n_normal < 1 or self.n_anomaly < 0:
            raise ValueError("need n_normal >= 1 and n_anomaly >= 0")
        if self.anomaly_rule not in ("peak", "mixture"):
            raise ValueError(f"unknown anomaly rule {self.anomaly_rule!r}")

    @property
    def mixture(self):
        w = np.array([c.weight for c in self.clusters], dtype=float)
        return GmmParams.from_arrays(
            w / w.sum(),
            [c.mean for c in self.clusters],
            [c.covariance for c in self.clusters],
        )

    def with_seed(self, seed):
        return ScenarioSpec(**{**self.__dict__, "seed": int(seed)})

    def to_dict(self):
        return {
            "clusters": [
                {"weight": c.weight, "mean": list(c.mean), "covariance": [list(r) for r in c.covariance]}
                for c in self.clusters
            ],
            "n_normal": self.n_normal,
            "n_anomaly": self.n_anomaly,
            "box": {"low": list(self.box_low), "high": list(self.box_high)},
            "q": self.q,
            "seed": self.seed,
            "anomaly_rule": self.anomaly_rule,
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            clusters = tuple(
                Cluster(
                    float(c["weight"]),
                    tuple(float(v) for v in c["mean"]),
                    tuple(tuple(float(v) for v in row) for row in c["covariance"]),
                )
                for c in doc["clusters"]
            )
            return cls(
                clusters=clusters,
                n_normal=int(doc["n_normal"]),
                n_anomaly=int(doc["n_anomaly"]),
                box_low=tuple(float(v) for v in doc["box"]["low"]),
                box_high=tuple(float(v) for v in doc["box"]["high"]),
                q=float(doc.get("q", 0.001)),
                seed=int(doc.get("seed", 0)),
                anomaly_rule=doc.get("anomaly_rule", "peak"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad scenario spec: {exc}") from exc


def _diag(*variances):
    return tuple(
        tuple(v if i == j else 0.0 for j in range(len(variances)))
        for i, v in enumerate(variances)
    )


def paper_like_spec(seed=0, n_normal=400, n_anomaly=400):
    """Dense heavy peak on the right, sparse light peak on the left.

    The dense peak is about 36 times taller, so the outskirts of the dense
    cluster have the same mixture density as the core of the sparse one.
    """
    return ScenarioSpec(
        clusters=(
            Cluster(0.9, (4.5, 0.0), _diag(1.0, 1.0)),
            Cluster(0.1, (-8.5, 0.0), _diag(4.0, 4.0)),
        ),
        n_normal=n_normal,
        n_anomaly=n_anomaly,
        box_low=(-14.1, -5.6),
        box_high=(7.3, 5.6),
        q=0.05,
        seed=seed,
        anomaly_rule="peak",
    )


def scenario_score(mixture, points, rule):
    """Per-point statistic the rejection rule thresholds."""
    if rule == "mixture":
        return mixture_log_pdf(mixture, points)
    with np.errstate(divide="ignore"):
        return np.max(np.log(feature_vectors(mixture, points, normalize=True)), axis=1)


REJECTION_BATCH = 65536
STALL_DRAWS = 1_000_000
STALL_RATE = 1e-3


def generate_scenario(spec):
    """Sample a labelled dataset: normals first (label 1), then anomalies (0)."""
    rng = np.random.default_rng(spec.seed)
    mixture = spec.mixture
    counts = rng.multinomial(spec.n_normal, mixture.weights)
    normals = np.concatenate(
        [comp.sample(int(k), rng) for comp, k in zip(mixture.components, counts) if k]
    )
    normals = normals[rng.permutation(normals.shape[0])]

    cutoff = np.quantile(scenario_score(mixture, normals, spec.anomaly_rule), spec.q)
    low, high = np.asarray(spec.box_low, float), np.asarray(spec.box_high, float)
    kept = []
    n_kept = 0
    draws = 0
    while n_kept < spec.n_anomaly:
        cand = rng.uniform(low, high, size=(REJECTION_BATCH, low.size))
        draws += REJECTION_BATCH
        acc = cand[scenario_score(mixture, cand, spec.anomaly_rule) < cutoff]
        kept.append(acc)
        n_kept += acc.shape[0]
        if draws >= STALL_DRAWS and n_kept / draws < STALL_RATE:
            raise RejectionStall(
                f"only {n_kept} of {draws} box draws fell below the density cutoff"
            )
    anomalies = np.concatenate(kept)[: spec.n_anomaly] if kept else np.empty((0, low.size))

    points = np.vstack([normals, anomalies])
    labels = np.r_[
        np.full(normals.shape[0], NORMAL_LABEL), np.full(anomalies.shape[0], ANOMALY_LABEL)
    ]
    names = tuple(f"x{i + 1}" for i in range(points.shape[1]))
    return Dataset(points, labels, names)


# --------------------------------------------------------------------------
# CSV


def _text_stream(stream):
    probe = stream.read(0)
    if isinstance(probe, bytes):
        return io.TextIOWrapper(stream, encoding="utf-8", newline="")
    return stream


def read_csv(source):
    """Parse a header-first CSV; a trailing ``label`` column holds 0/1 labels.

    Error positions are 1-based and count the header as row 1.
    """
    reader = csv.reader(_text_stream(source))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file, expected a header row", row=1) from None
    header = [h.strip() for h in header]
    has_labels = bool(header) and header[-1] == "label"
    if "label" in header[:-1]:
        raise ParseError("the label column must be last", row=1)
    names = header[:-1] if has_labels else header
    if not names:
        raise ParseError("no feature columns in header", row=1)

    rows, labels = [], []
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise RaggedRows(
                f"expected {len(header)} fields, found {len(row)}", row=row_no
            )
        values = []
        for col_no, cell in enumerate(row[: len(names)], start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"not a number: {cell!r}", row=row_no, column=col_no) from None
            if not math.isfinite(v):
                raise NonFiniteValue(f"non-finite value {cell!r}", row=row_no, column=col_no)
            values.append(v)
        rows.append(values)
        if has_labels:
            cell = row[-1].strip()
            if cell not in ("0", "1"):
                raise ParseError(
                    f"label must be 0 or 1, got {cell!r}", row=row_no, column=len(header)
                )
            labels.append(int(cell))

    points = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return Dataset(points, np.array(labels, dtype=int) if has_labels else None, tuple(names))


def _write_text(sink, text):
    """Write to a text or a binary stream; binary sinks get UTF-8."""
    if isinstance(sink, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(sink, "mode", ""):
        sink.write(text.encode("utf-8"))
    else:
        sink.write(text)


def write_csv(dataset, sink):
    names = dataset.feature_names or tuple(f"x{i + 1}" for i in range(dataset.d))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(names) + (["label"] if dataset.labels is not None else [])
    writer.writerow(header)
    for i, row in enumerate(dataset.points):
        cells = [repr(float(v)) for v in row]
        if dataset.labels is not None:
            cells.append(str(int(dataset.labels[i])))
        writer.writerow(cells)
    _write_text(sink, buf.getvalue())


# --------------------------------------------------------------------------
# model files

_COMMON_FIELDS = {"format_version", "model_kind", "d", "m", "weights", "means", "covariances"}
_KIND_FIELDS = {
    "digmm": ({"nu", "alphas", "weight_vector", "rho", "metadata"}, set()),
    "threshold_gmm": ({"log_threshold"}, {"metadata"}),
}


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def model_to_dict(model):
    gmm = model.gmm
    doc = {
        "format_version": FORMAT_VERSION,
        "model_kind": model.kind,
        "d": gmm.d,
        "m": gmm.m,
        "weights": gmm.weights.tolist(),
        "means": gmm.means.tolist(),
        "covariances": [c.covariance.reshape(-1).tolist() for c in gmm.components],
    }
    if isinstance(model, DigmmModel):
        meta = dict(model.fit_metadata)
        meta.setdefault("objective_value", model.svm.objective_value)
        doc.update(
            nu=model.nu,
            alphas=np.asarray(model.svm.alphas).tolist(),
            weight_vector=model.weight_vector.tolist(),
            rho=model.rho,
            metadata=_jsonable(meta),
        )
    elif isinstance(model, ThresholdGmmModel):
        doc["log_threshold"] = model.log_threshold
        if model.fit_metadata:
            doc["metadata"] = _jsonable(model.fit_metadata)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return doc


def write_model(model, sink):
    _write_text(sink, json.dumps(model_to_dict(model), indent=2, allow_nan=False) + "\n")


def _floats(value, shape, name):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"field {name!r} is not numeric") from exc
    if arr.shape != shape:
        raise SchemaError(f"field {name!r} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise InvariantViolation(f"field {name!r} has non-finite entries")
    return arr


def _solution_from_file(alphas, weight_vector, rho, nu, objective_value):
    n = alphas.size
    if n < 1:
        raise SchemaError("alphas must be nonempty")
    c = 1.0 / (nu * n)
    if np.any(alphas < -1e-12) or np.any(alphas > c * (1 + 1e-12)):
        raise InvariantViolation("alphas leave the box [0, 1/(nu n)]")
    if abs(alphas.sum() - 1.0) > 1e-10:
        raise InvariantViolation("alphas do not sum to 1")
    at_lower = alphas <= BOUND_RTOL * c
    at_upper = alphas >= c * (1.0 - BOUND_RTOL)
    alphas.setflags(write=False)
    weight_vector.setflags(write=False)
    dual_value = -0.5 * float(weight_vector @ weight_vector)
    return OcsvmSolution(
        alphas=alphas,
        rho=float(rho),
        weight_vector=weight_vector,
        support_idx=np.flatnonzero(~at_lower),
        margin_idx=np.flatnonzero(~at_lower & ~at_upper),
        objective_value=dual_value if objective_value is None else float(objective_value),
        dual_value=dual_value,
        kkt_violation=float("nan"),
        converged=True,
        passes=0,
    )


def model_from_dict(doc):
    if not isinstance(doc, dict):
        raise SchemaError("model file must hold a JSON object")
    if "format_version" not in doc:
        raise SchemaError("missing field 'format_version'")
    if doc["format_version"] != FORMAT_VERSION:
        raise VersionError(f"unsupported format_version {doc['format_version']!r}")
    kind = doc.get("model_kind")
    if kind not in _KIND_FIELDS:
        raise SchemaError(f"unknown model_kind {kind!r}")
    required, optional = _KIND_FIELDS[kind]
    required = _COMMON_FIELDS | required
    missing = required - doc.keys()
    if missing:
        raise SchemaError(f"missing fields: {', '.join(sorted(missing))}")
    unknown = doc.keys() - required - optional
    if unknown:
        raise SchemaError(f"unknown fields: {', '.join(sorted(unknown))}")

    d, m = doc["d"], doc["m"]
    if not (isinstance(d, int) and isinstance(m, int) and d >= 1 and m >= 1):
        raise SchemaError("d and m must be positive integers")
    weights = _floats(doc["weights"], (m,), "weights")
    means = _floats(doc["means"], (m, d), "means")
    covs = _floats(doc["covariances"], (m, d * d), "covariances").reshape(m, d, d)
    try:
        gmm = GmmParams.from_arrays(weights, means, covs)
    except InvariantViolation:
        raise
    except DigmmError as exc:
        raise InvariantViolation(f"invalid mixture: {exc}") from exc

    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict):
        raise SchemaError("metadata must be an object")
    try:
        if kind == "threshold_gmm":
            log_threshold = doc["log_threshold"]
            if not isinstance(log_threshold, (int, float)):
                raise SchemaError("log_threshold must be a number")
            return ThresholdGmmModel(gmm, float(log_threshold), metadata)

        nu = doc["nu"]
        if not isinstance(nu, (int, float)) or not (0.0 < nu <= 1.0):
            raise InvariantViolation("nu must lie in (0, 1]")
        alphas = np.array(doc["alphas"], dtype=float).reshape(-1)
        w = _floats(doc["weight_vector"], (m,), "weight_vector")
        rho = doc["rho"]
        if not isinstance(rho, (int, float)) or not math.isfinite(rho):
            raise InvariantViolation("rho must be a finite number")
        svm = _solution_from_file(alphas, w, rho, float(nu), metadata.get("objective_value"))
        return DigmmModel(gmm, svm, float(nu), metadata)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DigmmError):
            raise
        raise SchemaError(str(exc)) from exc


def read_model(source):
    try:
        doc = json.load(_text_stream(source))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(doc)


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        write_model(model, fh)


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        return read_model(fh)
