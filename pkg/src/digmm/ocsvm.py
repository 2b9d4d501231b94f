"""One-class SVM in its dual form, solved by SMO over a precomputed Gram matrix.

Primal::

    min_{w, rho}  1/2 ||w||^2 + 1/(nu n) sum_i max(rho - <w, p_i>, 0) - rho

Dual::

    min_alpha  1/2 alpha^T G alpha   s.t.  0 <= alpha_i <= 1/(nu n),  sum alpha = 1

At the optimum ``w = sum_i alpha_i p_i`` and the primal value equals
``-1/2 alpha^T G alpha``.
"""

from dataclasses import dataclass
import warnings

import numpy as np

from .errors import (
    DimensionMismatch,
    Infeasible,
    InfeasiblePoint,
    NoConvergenceWarning,
    NonSymmetric,
)

FEASIBILITY_TOL = 1e-8
# alpha within this fraction of C of a bound counts as sitting on it
BOUND_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class OcsvmProblem:
    gram: np.ndarray
    nu: float
    features: np.ndarray = None

    def __post_init__(self):
        gram = np.array(self.gram, dtype=float)
        if gram.ndim != 2 or gram.shape[0] != gram.shape[1] or gram.shape[0] < 1:
            raise DimensionMismatch(f"gram must be a nonempty square matrix, got {gram.shape}")
        scale = max(1.0, float(np.max(np.abs(gram))))
        if np.max(np.abs(gram - gram.T)) > 1e-10 * scale:
            raise NonSymmetric("gram matrix is not symmetric")
        if not (0.0 < self.nu <= 1.0):
            raise ValueError(f"nu must lie in (0, 1], got {self.nu}")
        n = gram.shape[0]
        if self.nu * n < 1.0 - 1e-12:
            raise Infeasible(
                f"nu * n = {self.nu * n:.6g} < 1: the box constraint makes sum(alpha) = 1 infeasible"
            )
        gram.setflags(write=False)
        object.__setattr__(self, "gram", gram)
        if self.features is not None:
            feats = np.array(self.features, dtype=float)
            if feats.ndim != 2 or feats.shape[0] != n:
                raise DimensionMismatch("features must have one row per Gram row")
            feats.setflags(write=False)
            object.__setattr__(self, "features", feats)

    @classmethod
    def from_features(cls, features, nu):
        from .featmap import gram_matrix

        features = np.asarray(features, dtype=float)
        return cls(gram_matrix(features), nu, features)

    @property
    def n(self):
        return self.gram.shape[0]

    @property
    def upper_bound(self):
        return 1.0 / (self.nu * self.n)


@dataclass(frozen=True, eq=False)
class OcsvmSolution:
    alphas: np.ndarray
    rho: float
    weight_vector: np.ndarray
    support_idx: np.ndarray
    margin_idx: np.ndarray
    objective_value: float
    dual_value: float
    kkt_violation: float
    converged: bool
    passes: int

    @property
    def status(self):
        return "converged" if self.converged else "max_passes"


def dual_objective(problem, alphas):
    """Value of the dual maximization, ``-1/2 alpha^T G alpha``."""
    a = np.asarray(alphas, dtype=float)
    return -0.5 * float(a @ problem.gram @ a)


def _bound_masks(alphas, c):
    at_lower = alphas <= BOUND_RTOL * c
    at_upper = alphas >= c * (1.0 - BOUND_RTOL)
    return at_lower, at_upper


def _violation(grad, at_lower, at_upper):
    # Feasible directions: raise alpha_i (i not at upper) while lowering
    # alpha_j (j not at lower). The pair is useful while grad_j > grad_i.
    can_rise = ~at_upper
    can_fall = ~at_lower
    if not can_rise.any() or not can_fall.any():
        return 0.0, -1, -1
    i = int(np.argmin(np.where(can_rise, grad, np.inf)))
    j = int(np.argmax(np.where(can_fall, grad, -np.inf)))
    return max(0.0, float(grad[j] - grad[i])), i, j


def _check_feasible(problem, alphas):
    a = np.asarray(alphas, dtype=float)
    if a.shape != (problem.n,):
        raise DimensionMismatch(f"expected {problem.n} dual coefficients, got shape {a.shape}")
    c = problem.upper_bound
    if np.any(a < -FEASIBILITY_TOL) or np.any(a > c + FEASIBILITY_TOL):
        raise InfeasiblePoint("dual coefficients leave the box [0, 1/(nu n)]")
    if abs(a.sum() - 1.0) > FEASIBILITY_TOL:
        raise InfeasiblePoint(f"dual coefficients sum to {a.sum():.12g}, not 1")
    return a


def kkt_violation(problem, alphas):
    """Largest ``grad_j - grad_i`` over pairs SMO could still move along.

    Zero exactly at the optimum.
    """
    a = _check_feasible(problem, alphas)
    grad = problem.gram @ a
    at_lower, at_upper = _bound_masks(a, problem.upper_bound)
    return _violation(grad, at_lower, at_upper)[0]


def primal_objective(solution, features, nu):
    """Primal objective evaluated literally at ``(w, rho)``.

    ``solution`` is an :class:`OcsvmSolution` or a ``(w, rho)`` pair.
    """
    if isinstance(solution, OcsvmSolution):
        w, rho = solution.weight_vector, solution.rho
    else:
        w, rho = solution
    w = np.asarray(w, dtype=float).reshape(-1)
    f = np.atleast_2d(np.asarray(features, dtype=float))
    if f.shape[1] != w.size:
        raise DimensionMismatch(
            f"features have length {f.shape[1]}, weight vector has {w.size}"
        )
    n = f.shape[0]
    hinge = np.maximum(rho - f @ w, 0.0)
    return 0.5 * float(w @ w) + float(hinge.sum()) / (nu * n) - rho


def _recover_rho(grad, alphas, c):
    at_lower, at_upper = _bound_masks(alphas, c)
    margin = ~at_lower & ~at_upper
    if margin.any():
        return float(np.mean(grad[margin])), np.flatnonzero(margin)
    # Every alpha sits on a bound: take the middle of the feasible rho interval.
    lo = grad[at_upper].max() if at_upper.any() else None
    hi = grad[at_lower].min() if at_lower.any() else None
    if lo is None:
        rho = hi
    elif hi is None:
        rho = lo
    else:
        rho = 0.5 * (lo + hi)
    return float(rho), np.flatnonzero(margin)


def default_max_passes(n):
    return 10 * n * max(100, n)


def solve_dual(problem, tol=1e-6, max_passes=None, callback=None):
    """SMO with maximal-violating-pair selection.

    Starts from the uniform point ``alpha = 1/n`` and updates one pair per
    pass until the KKT violation drops below ``tol``. When ``max_passes`` runs
    out, the last (and best) iterate is returned with ``converged=False`` and
    a :class:`NoConvergenceWarning` is emitted. ``callback(alphas)`` is called
    after every pair update with a read-only copy.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = problem.n
    if max_passes is None:
        max_passes = default_max_passes(n)
    gram = problem.gram
    diag = np.diag(gram)
    c = problem.upper_bound

    alphas = np.full(n, 1.0 / n)
    grad = gram @ alphas
    at_lower = np.zeros(n, dtype=bool)
    at_upper = alphas >= c * (1.0 - BOUND_RTOL)
    if at_upper.all():
        # nu = 1: the box pins every alpha to 1/n.
        alphas[:] = c

    passes = 0
    converged = False
    while True:
        viol, i, j = _violation(grad, at_lower, at_upper)
        if viol < tol:
            converged = True
            break
        if passes >= max_passes:
            break
        passes += 1
        room_i = c - alphas[i]
        room_j = alphas[j]
        step_cap = min(room_i, room_j)
        curvature = diag[i] + diag[j] - 2.0 * gram[i, j]
        step = viol / curvature if curvature > 0 else step_cap
        if step >= step_cap:
            step = step_cap
        if step == room_i:
            alphas[i] = c
        else:
            alphas[i] += step
        if step == room_j:
            alphas[j] = 0.0
        else:
            alphas[j] -= step
        grad += step * (gram[:, i] - gram[:, j])
        at_lower[i] = alphas[i] <= BOUND_RTOL * c
        at_upper[i] = alphas[i] >= c * (1.0 - BOUND_RTOL)
        at_lower[j] = alphas[j] <= BOUND_RTOL * c
        at_upper[j] = alphas[j] >= c * (1.0 - BOUND_RTOL)
        if callback is not None:
            view = alphas.copy()
            view.setflags(write=False)
            callback(view)

    if not converged:
        warnings.warn(
            f"SMO stopped after {passes} passes with KKT violation {viol:.3g} >= tol {tol:.3g}",
            NoConvergenceWarning,
            stacklevel=2,
        )

    if problem.features is not None:
        w = problem.features.T @ alphas
        grad = problem.features @ w
    else:
        w = None
        grad = gram @ alphas
    rho, margin_idx = _recover_rho(grad, alphas, c)
    sq_norm = float(alphas @ gram @ alphas)
    objective = 0.5 * sq_norm + float(np.maximum(rho - grad, 0.0).sum()) * c - rho
    final_viol = _violation(grad, *_bound_masks(alphas, c))[0]
    alphas.setflags(write=False)
    if w is not None:
        w.setflags(write=False)
    return OcsvmSolution(
        alphas=alphas,
        rho=rho,
        weight_vector=w,
        support_idx=np.flatnonzero(alphas > BOUND_RTOL * c),
        margin_idx=margin_idx,
        objective_value=objective,
        dual_value=-0.5 * sq_norm,
        kkt_violation=final_viol,
        converged=converged,
        passes=passes,
    )
