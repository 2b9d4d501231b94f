"""Multivariate Gaussian densities evaluated through a cached Cholesky factor.

Everything here works in log-space. Raw densities are only produced by
:mod:`digmm.featmap`, since ``exp`` underflows in double precision once the
Mahalanobis distance reaches a few tens.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NonSymmetric, NotPositiveDefinite

LOG_2PI = np.log(2.0 * np.pi)

SYMMETRY_RTOL = 1e-12
JITTER_CAP_FACTOR = 1e-3
# First jitter tried when the caller asked for none and plain factorization failed.
JITTER_START_FACTOR = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def check_symmetric(matrix, rtol=SYMMETRY_RTOL):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise NonSymmetric(f"expected a square matrix, got shape {matrix.shape}")
    scale = np.max(np.abs(matrix)) if matrix.size else 0.0
    if np.max(np.abs(matrix - matrix.T), initial=0.0) > rtol * scale:
        raise NonSymmetric("matrix is not symmetric within tolerance")
    return matrix


def cholesky_factor(covariance, jitter=0.0, return_jitter=False):
    """Lower Cholesky factor of ``covariance + jitter * I``.

    If the factorization fails the jitter is raised tenfold at a time, up to
    ``1e-3 * mean(diag(covariance))``. ``NotPositiveDefinite`` is raised when
    even the cap does not help.
    """
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    cov = check_symmetric(covariance)
    d = cov.shape[0]
    mean_diag = float(np.mean(np.diag(cov))) if d else 0.0
    cap = JITTER_CAP_FACTOR * abs(mean_diag)
    eye = np.eye(d)

    current = float(jitter)
    while True:
        try:
            chol = np.linalg.cholesky(cov + current * eye)
        except np.linalg.LinAlgError:
            chol = None
        if chol is not None and np.all(np.diag(chol) > 0) and np.all(np.isfinite(chol)):
            return (chol, current) if return_jitter else chol
        if current == 0.0:
            current = JITTER_START_FACTOR * abs(mean_diag)
            if current == 0.0:
                break
        else:
            current *= 10.0
        if current > cap * (1 + 1e-12):
            break
    raise NotPositiveDefinite(
        f"covariance is not positive definite even with jitter up to {cap:.3g}"
    )


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """One full-covariance Gaussian, immutable once built.

    ``covariance`` already includes whatever jitter was needed to factor it,
    so ``chol @ chol.T`` reproduces it.
    """

    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray
    log_norm_const: float

    @classmethod
    def from_params(cls, mean, covariance, jitter=0.0):
        mean = np.asarray(mean, dtype=float).reshape(-1)
        cov = np.asarray(covariance, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"mean has length {mean.size} but covariance has shape {cov.shape}"
            )
        chol, used = cholesky_factor(cov, jitter, return_jitter=True)
        if used:
            cov = cov + used * np.eye(mean.size)
        d = mean.size
        log_norm_const = -0.5 * d * LOG_2PI - float(np.sum(np.log(np.diag(chol))))
        return cls(_frozen(mean), _frozen(cov), _frozen(chol), log_norm_const)

    @property
    def d(self):
        return self.mean.size

    def mahalanobis_sq(self, x):
        x = _as_points(x, self.d)
        z = solve_triangular(self.chol, (x - self.mean).T, lower=True, check_finite=False)
        return np.sum(z * z, axis=0)

    def log_pdf(self, x):
        return log_pdf(self, x)

    def sample(self, count, rng):
        return sample(self, count, rng)


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != d:
        raise DimensionMismatch(f"expected points of dimension {d}, got shape {np.shape(x)}")
    return x


def log_pdf(component, x):
    """Log density at ``x``.

    A single point of shape ``(d,)`` gives a float; an ``(n, d)`` array gives
    an array of ``n`` values.
    """
    single = np.ndim(x) == 1
    values = component.log_norm_const - 0.5 * component.mahalanobis_sq(x)
    return float(values[0]) if single else values


def sample(component, count, rng):
    """Draw ``count`` points as ``mean + chol @ z`` with ``z`` standard normal."""
    if count < 1:
        raise ValueError("count must be positive")
    z = rng.standard_normal((count, component.d))
    return component.mean + z @ component.chol.T
