"""Component-density feature map and the Gram matrix it induces.

A sample ``x`` maps to the ``m`` raw component densities
``(p_1(x), ..., p_m(x))``. Every coordinate is nonnegative, so all pairwise
inner products are too, and points far from every component land at the
origin.
"""

import numpy as np

from .errors import LengthMismatch
from .gmm import component_log_pdfs


def feature_vectors(params, x, normalize=False):
    """Feature map for one point ``(d,)`` or a batch ``(n, d)``.

    Entries underflow to exactly 0 far from the means, which is legal.
    With ``normalize=True`` entry ``j`` is divided by the peak density of
    component ``j`` so it lies in ``[0, 1]``; this is off by default and only
    meant for mixtures whose covariance determinants differ wildly.
    """
    single = np.ndim(x) == 1
    logs = component_log_pdfs(params, x)
    if normalize:
        logs = logs - np.array([c.log_norm_const for c in params.components])
    feats = np.exp(logs)
    return feats[0] if single else feats


feature_vector = feature_vectors


def gram_matrix(features):
    """``G[i, k] = <p(x_i), p(x_k)>``, exactly symmetric."""
    rows = [np.asarray(f, dtype=float).reshape(-1) for f in features]
    if not rows:
        return np.zeros((0, 0))
    m = rows[0].size
    if any(r.size != m for r in rows):
        raise LengthMismatch("feature vectors have different lengths")
    f = np.stack(rows)
    g = f @ f.T
    upper = np.triu_indices_from(g, k=1)
    g[(upper[1], upper[0])] = g[upper]
    return g


def cosine_matrix(features):
    """Pairwise cosines between nonzero feature vectors; NaN for zero vectors.

    Rows are rescaled by their largest entry before normalizing, so vectors
    near the underflow limit keep full precision.
    """
    f = np.atleast_2d(np.asarray(features, dtype=float))
    scale = np.max(np.abs(f), axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = f / scale
        unit = f / np.linalg.norm(f, axis=1, keepdims=True)
    return gram_matrix(unit)
