"""Full-covariance Gaussian mixtures and their EM fit."""

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DegenerateData,
    DimensionMismatch,
    InvariantViolation,
    NonFiniteValue,
    NotPositiveDefinite,
    TooFewSamples,
)
from .gaussian import GaussianComponent, _as_points

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-12
MAX_RESEEDS = 3


@dataclass(frozen=True, eq=False)
class GmmParams:
    """Mixture weights plus one :class:`GaussianComponent` per peak."""

    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        weights.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", weights)
        if not comps:
            raise InvariantViolation("a mixture needs at least one component")
        if weights.size != len(comps):
            raise InvariantViolation(
                f"{weights.size} weights for {len(comps)} components"
            )
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise InvariantViolation("mixture weights must be strictly positive")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise InvariantViolation(
                f"mixture weights sum to {weights.sum():.17g}, not 1"
            )
        d = comps[0].d
        if any(c.d != d for c in comps):
            raise InvariantViolation("components disagree on dimension")

    @classmethod
    def from_arrays(cls, weights, means, covariances, jitter=0.0):
        means = np.atleast_2d(np.asarray(means, dtype=float))
        covariances = np.asarray(covariances, dtype=float)
        if covariances.ndim == 2:
            covariances = covariances[None]
        if means.shape[0] != covariances.shape[0]:
            raise InvariantViolation("means and covariances disagree on m")
        comps = tuple(
            GaussianComponent.from_params(mu, cov, jitter)
            for mu, cov in zip(means, covariances)
        )
        return cls(comps, weights)

    @property
    def m(self):
        return len(self.components)

    @property
    def d(self):
        return self.components[0].d

    @property
    def means(self):
        return np.stack([c.mean for c in self.components])

    @property
    def covariances(self):
        return np.stack([c.covariance for c in self.components])


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 500
    rel_tol: float = 1e-8
    n_init: int = 5
    reg_covar: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.n_init < 1:
            raise ValueError("n_init must be positive")
        if self.reg_covar < 0:
            raise ValueError("reg_covar must be nonnegative")


@dataclass(frozen=True)
class EmTrace:
    """Log-likelihood history of the chosen restart.

    ``rescues`` lists the positions in ``log_likelihoods`` that directly
    follow an empty-component re-seed; the likelihood may drop across those
    and only those steps. ``restart_traces`` holds the history of every
    restart, chosen or not.
    """

    log_likelihoods: tuple
    converged: bool
    iterations: int
    restart_index: int
    rescues: tuple = ()
    restart_traces: tuple = field(default=(), repr=False)
    restart_rescues: tuple = field(default=(), repr=False)

    @property
    def final_log_likelihood(self):
        return self.log_likelihoods[-1]


def _points(data):
    points = getattr(data, "points", data)
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None] if points.size else points.reshape(0, 1)
    return points


def component_log_pdfs(params, x):
    """``(n, m)`` matrix of per-component log densities."""
    x = _as_points(x, params.d)
    return np.column_stack([c.log_pdf(x) for c in params.components])


def _weighted_log_pdfs(params, x):
    return component_log_pdfs(params, x) + np.log(params.weights)


def mixture_log_pdf(params, x):
    """Log of the mixture density, via log-sum-exp over the components."""
    single = np.ndim(x) == 1
    values = logsumexp(_weighted_log_pdfs(params, x), axis=1)
    return float(values[0]) if single else values


def responsibilities(params, x):
    """Posterior component probabilities, normalized in log-space."""
    single = np.ndim(x) == 1
    log_w = _weighted_log_pdfs(params, x)
    resp = np.exp(log_w - logsumexp(log_w, axis=1, keepdims=True))
    resp /= resp.sum(axis=1, keepdims=True)
    return resp[0] if single else resp


def _ordered_sum(values):
    total = 0.0
    for v in values.tolist():
        total += v
    return total


def log_likelihood(params, data):
    points = _points(data)
    if points.shape[0] == 0:
        return 0.0
    if points.shape[1] != params.d:
        raise DimensionMismatch(
            f"data has dimension {points.shape[1]}, model has {params.d}"
        )
    return _ordered_sum(mixture_log_pdf(params, points))


def n_free_parameters(m, d):
    return (m - 1) + m * d + m * d * (d + 1) // 2


def bic(params, data):
    points = _points(data)
    n = points.shape[0]
    if n < 1:
        raise TooFewSamples("BIC needs at least one sample")
    k = n_free_parameters(params.m, params.d)
    return k * np.log(n) - 2.0 * log_likelihood(params, points)


def _global_covariance(x):
    diff = x - x.mean(axis=0)
    return diff.T @ diff / x.shape[0]


def _ridge(cov, reg_covar):
    d = cov.shape[0]
    return cov + reg_covar * (np.trace(cov) / d) * np.eye(d)


def _kmeanspp(x, m, rng):
    n = x.shape[0]
    idx = [int(rng.integers(n))]
    dist = np.sum((x - x[idx[0]]) ** 2, axis=1)
    for _ in range(1, m):
        total = dist.sum()
        if not total > 0:
            raise DegenerateData(f"fewer than {m} distinct points to seed from")
        nxt = int(rng.choice(n, p=dist / total))
        idx.append(nxt)
        dist = np.minimum(dist, np.sum((x - x[nxt]) ** 2, axis=1))
    return x[idx].copy()


class _RestartFailed(Exception):
    pass


def _build(weights, means, covs):
    return GmmParams(
        tuple(GaussianComponent.from_params(mu, cov) for mu, cov in zip(means, covs)),
        weights,
    )


def _e_step(params, x):
    log_w = _weighted_log_pdfs(params, x)
    norm = logsumexp(log_w, axis=1)
    resp = np.exp(log_w - norm[:, None])
    return _ordered_sum(norm), resp, norm


def _m_step(x, resp, reg_covar, global_cov, lowest_density, state):
    n, d = x.shape
    counts = resp.sum(axis=0)
    m = counts.size
    floor = 1.0 / (10.0 * n)
    weights = counts / n
    comps = [None] * m
    rescued = []
    for k in range(m):
        if weights[k] < floor:
            rescued.append(k)
            continue
        mean = resp[:, k] @ x / counts[k]
        diff = x - mean
        cov = (resp[:, k, None] * diff).T @ diff / counts[k]
        cov = 0.5 * (cov + cov.T)
        # A component squeezed onto fewer than d + 1 points has a singular
        # covariance and an unbounded likelihood; once the ridge is all that
        # keeps it invertible, treat it like an empty component.
        if counts[k] < d + 1 and np.linalg.eigvalsh(cov)[0] <= reg_covar * np.trace(cov) / d:
            rescued.append(k)
            continue
        cov = _ridge(cov, reg_covar)
        try:
            comps[k] = GaussianComponent.from_params(mean, cov)
        except NotPositiveDefinite:
            rescued.append(k)
    for k in sorted(rescued):
        state["reseeds"] += 1
        if state["reseeds"] > MAX_RESEEDS:
            raise _RestartFailed(f"component {k} kept collapsing")
        comps[k] = GaussianComponent.from_params(x[lowest_density], global_cov)
        weights[k] = 1.0 / n
    weights = weights / weights.sum()
    return GmmParams(tuple(comps), weights), bool(rescued)


def _run_restart(x, m, config, rng, global_cov):
    n, d = x.shape
    means = _kmeanspp(x, m, rng)
    covs = np.repeat(global_cov[None], m, axis=0)
    params = _build(np.full(m, 1.0 / m), means, covs)
    ll, resp, norm = _e_step(params, x)
    history = [ll]
    rescues = []
    state = {"reseeds": 0}
    converged = False
    for _ in range(config.max_iters):
        params, rescued = _m_step(
            x, resp, config.reg_covar, global_cov, int(np.argmin(norm)), state
        )
        new_ll, resp, norm = _e_step(params, x)
        history.append(new_ll)
        if rescued:
            rescues.append(len(history) - 1)
        elif abs(new_ll - ll) / (abs(ll) + 1.0) < config.rel_tol:
            converged = True
            break
        ll = new_ll
    return params, history, converged, rescues


def fit_em(data, m, config=None):
    """Fit an ``m``-component mixture by EM with ``config.n_init`` restarts.

    Labels on ``data`` are ignored. Returns ``(params, trace)`` for the
    restart with the highest final log-likelihood.
    """
    config = config or EmConfig()
    x = _points(data)
    n, d = x.shape
    if m < 1:
        raise ValueError("m must be positive")
    if n < m:
        raise TooFewSamples(f"need at least m={m} samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue("training data contains non-finite values")
    if np.unique(x, axis=0).shape[0] < m:
        raise DegenerateData(f"fewer than {m} distinct points")
    global_cov = _ridge(_global_covariance(x), config.reg_covar)
    if not np.trace(global_cov) > 0:
        raise DegenerateData("data has zero variance")

    results = []
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_init)
    for r, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        try:
            results.append((r, *_run_restart(x, m, config, rng, global_cov)))
        except (_RestartFailed, DegenerateData, NotPositiveDefinite) as exc:
            logger.debug("EM restart %d failed: %s", r, exc)
            results.append((r, None, None, False, None))

    ok = [res for res in results if res[1] is not None]
    if not ok:
        raise DegenerateData(f"all {config.n_init} EM restarts collapsed")
    best = max(ok, key=lambda res: (res[2][-1], -res[0]))
    r, params, history, converged, rescues = best
    trace = EmTrace(
        log_likelihoods=tuple(history),
        converged=converged,
        iterations=len(history) - 1,
        restart_index=r,
        rescues=tuple(rescues),
        restart_traces=tuple(tuple(res[2]) if res[2] else () for res in results),
        restart_rescues=tuple(tuple(res[4]) if res[4] else () for res in results),
    )
    return params, trace
