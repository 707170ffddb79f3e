"""Safeguarded damped Newton ascent.

The concentrated costs are maximized, so steps are built from a
negative-definite surrogate of the Hessian: a modified Cholesky
factorization of ``-H`` with a doubling shift.  Step lengths come from
plain backtracking that insists on a strict cost increase; coordinates
flagged positive (the noise parameters) are kept away from zero by
capping the step so no entry loses more than a fixed factor per
iteration, and a runaway of those coordinates is reported as
divergence instead of being iterated into overflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .workspace import IndefiniteCovarianceError, RankDeficiencyError

__all__ = ["NewtonOptions", "NewtonOutcome", "modified_cholesky", "newton_maximize"]


@dataclass(frozen=True)
class NewtonOptions:
    """Knobs shared by every Newton invocation.

    ``hessian_mode`` selects the joint-stage Hessian: 'full' uses every
    summand of the closed-form blocks, 'reduced' (and 'approx', which is
    treated the same for the joint stage) keeps only the summands that
    dominate near convergence at high SNR.  The uniform line-search stage
    always uses its negative-semidefinite approximate Hessian.
    """

    max_iters: int = 50
    max_outer: int = 100
    step_tol: float = 1e-8       # on max_i |dx_i| / max(1, |x_i|)
    cost_tol: float = 1e-11      # relative cost stagnation
    backtrack: float = 0.5
    min_mu: float = 2.0 ** -20
    hessian_mode: str = "full"
    lam_floor: float = 0.1
    lam_growth: float = 10.0
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.hessian_mode not in ("full", "reduced", "approx"):
            raise ValueError("hessian_mode must be 'full', 'reduced' or 'approx'")
        if not (0.0 < self.backtrack < 1.0):
            raise ValueError("backtrack factor must lie in (0, 1)")
        if not (0.0 < self.lam_floor < 1.0):
            raise ValueError("lam_floor must lie in (0, 1)")
        if not self.lam_growth > 1.0:
            raise ValueError("lam_growth must exceed 1")


@dataclass
class NewtonOutcome:
    """Result of one Newton run.

    ``iterations`` counts accepted steps.  ``cost_trace`` holds the cost
    after each accepted step, starting with the initial value, and is
    strictly increasing by construction.  ``pos_max_trace`` tracks the
    largest positive-flagged coordinate alongside it (empty when none
    are flagged).
    """

    x: np.ndarray
    cost: float
    iterations: int = 0
    n_grad_evals: int = 0
    n_cost_evals: int = 0
    converged: bool = False
    diverged: bool = False
    note: str = ""
    cost_trace: list = field(default_factory=list)
    pos_max_trace: list = field(default_factory=list)


def modified_cholesky(h: np.ndarray, scale: float = 1e-8):
    """Cholesky factor of ``-(h - tau I)`` with the smallest shift found
    by doubling.

    Returns ``(factor, tau)`` where ``factor`` is a scipy ``cho_factor``
    result for ``-h + tau I`` and ``tau = 0`` whenever ``h`` is already
    negative definite.

    The doubling starts at ``scale`` times the smallest diagonal
    magnitude rather than the matrix norm: the joint Hessian mixes angle
    curvatures that grow with SNR against noise-parameter curvatures
    that shrink like 1/lambda^2, and a shift keyed to the largest block
    would swamp the weak coordinates and degrade Newton into a crawling
    gradient ascent along them.
    """
    h = np.asarray(h, dtype=float)
    if not np.all(np.isfinite(h)):
        raise ValueError("Hessian contains non-finite entries")
    a = -h
    try:
        return cho_factor(a, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    diag = np.abs(np.diagonal(h))
    tau = scale * max(diag.min(), 1e-300)
    eye = np.eye(h.shape[0])
    for _ in range(2000):
        try:
            return cho_factor(a + tau * eye, lower=True), tau
        except np.linalg.LinAlgError:
            tau *= 2.0
    raise np.linalg.LinAlgError("modified Cholesky failed to find a shift")


def newton_maximize(
    cost_fn,
    grad_hess_fn,
    x0,
    options: NewtonOptions | None = None,
    positive: np.ndarray | None = None,
) -> NewtonOutcome:
    """Damped Newton ascent of a scalar cost.

    Parameters
    ----------
    cost_fn : callable
        Maps a parameter vector to a float; may return ``-inf`` to mark a
        trial point as infeasible (backtracking then shortens the step).
    grad_hess_fn : callable
        Maps a parameter vector to ``(gradient, hessian)``.  A
        rank-deficiency or indefiniteness error raised here terminates
        the run gracefully with a note instead of propagating.
    x0 : array_like
        Start point; the cost must be finite there.
    positive : ndarray of bool, optional
        Coordinates to be kept positive.  Trial points are clamped
        coordinatewise so each flagged entry retains at least
        ``lam_floor`` times its previous value, and the run stops with
        ``diverged=True`` once the largest flagged coordinate exceeds
        ``divergence_factor`` times its initial maximum.

    Notes
    -----
    Step-size termination uses the scaled infinity norm
    ``max_i |dx_i| / max(1, |x_i|)`` so that large noise coordinates do
    not hold an absolute tolerance hostage, checked both on the Newton
    step before the line search and on the accepted movement after it.
    A run also stops once an accepted step raises the cost by less than
    ``cost_tol`` relative to its magnitude: near the maximum the cost
    changes quadratically in the step, so increments demanded by
    ``step_tol`` sit below the cost's floating-point resolution and
    further "strict increases" are rounding noise, not ascent.
    """
    opts = options or NewtonOptions()
    x = np.array(x0, dtype=float, copy=True)
    c = cost_fn(x)
    if not np.isfinite(c):
        raise ValueError("cost is not finite at the starting point")

    out = NewtonOutcome(x=x, cost=c, n_cost_evals=1)
    out.cost_trace.append(c)
    pos = None
    pos_max0 = None
    if positive is not None:
        pos = np.asarray(positive, dtype=bool)
        if pos.shape != x.shape:
            raise ValueError("positive mask must match the parameter vector")
        if not pos.any():
            pos = None
    if pos is not None:
        if np.any(x[pos] <= 0):
            raise ValueError("positive-flagged coordinates must start positive")
        pos_max0 = float(x[pos].max())
        out.pos_max_trace.append(pos_max0)

    for _ in range(opts.max_iters):
        try:
            g, h = grad_hess_fn(x)
        except (RankDeficiencyError, IndefiniteCovarianceError) as exc:
            out.note = f"derivative evaluation failed: {exc}"
            break
        out.n_grad_evals += 1
        factor, _ = modified_cholesky(h)
        step = cho_solve(factor, np.asarray(g, dtype=float))

        scale = np.maximum(1.0, np.abs(x))
        if (np.abs(step) / scale).max() < opts.step_tol:
            out.converged = True
            break

        if pos is not None:
            floor = opts.lam_floor * x[pos]
            ceil = opts.lam_growth * x[pos]
        mu = 1.0
        accepted = False
        while mu >= opts.min_mu:
            x_try = x + mu * step
            if pos is not None:
                # bound each step to a fixed factor per iteration,
                # clamping only offenders
                x_try[pos] = np.clip(x_try[pos], floor, ceil)
            c_try = cost_fn(x_try)
            out.n_cost_evals += 1
            if np.isfinite(c_try) and c_try > c:
                accepted = True
                break
            mu *= opts.backtrack
        if not accepted:
            out.note = out.note or "line search found no ascent step"
            break

        moved = (np.abs(x_try - x) / scale).max()
        gained = c_try - c
        x, c = x_try, c_try
        out.iterations += 1
        out.cost_trace.append(c)
        if pos is not None:
            pos_max = float(x[pos].max())
            out.pos_max_trace.append(pos_max)
            if pos_max > opts.divergence_factor * pos_max0:
                out.diverged = True
                out.note = "positive-flagged coordinates diverged"
                break
        if moved < opts.step_tol or gained < opts.cost_tol * (1.0 + abs(c)):
            out.converged = True
            break

    out.x = x
    out.cost = c
    return out
