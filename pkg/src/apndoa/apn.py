"""Three-stage ML direction estimation.

Stage 1 inserts angles one at a time by a projection line search on the
uniform-noise deterministic cost and refines all angles so far with
damped Newton steps.  Stage 2 initializes the per-sensor noise
parameters from a covariance-fitting formula evaluated at the stage-1
angles.  Stage 3 maximizes the concentrated deterministic or stochastic
cost over (theta, lambda), either jointly or by alternating single
Newton sweeps over each parameter block.

Targets
-------
``dmlo``
    stage 1 only: uniform-noise deterministic ML angles.
``dml`` / ``sml``
    joint Newton on the concentrated deterministic / stochastic cost.
``dml-alt`` / ``sml-alt``
    alternating theta / lambda sweeps on the same costs.
``sml-red``
    joint Newton with the reduced Hessian blocks.

The deterministic cost is degenerate in the noise parameters (its
concentrated supremum is approached by diverging lambda), so ``dml``
and ``dml-alt`` exist for study and comparison; the run is flagged via
``diverged_lambda`` when the safeguard trips.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .arrays import ArrayGeometry, steering_set
from .derivatives import grad_dml_uniform, grad_hess, hess_dml_uniform
from .newton import NewtonOptions, NewtonOutcome, newton_maximize
from .workspace import (
    FlopCounter,
    IndefiniteCovarianceError,
    RankDeficiencyError,
    SampleCovariance,
    build_workspace,
    cost_dml,
    cost_dml_uniform,
    cost_sml,
    sample_covariance,
)
from . import flops as flop_model

__all__ = [
    "TARGETS",
    "StageCounts",
    "EstimationResult",
    "ap_add_angle",
    "init_noise",
    "apn_estimate",
]

TARGETS = ("dmlo", "dml", "dml-alt", "sml", "sml-alt", "sml-red")

_HALF_PI = np.pi / 2.0


@dataclass(frozen=True)
class StageCounts:
    """Work bookkeeping for one pipeline stage (per insertion in stage 1)."""

    candidates: int = 0
    newton_iters: int = 0
    grad_evals: int = 0
    cost_evals: int = 0


@dataclass
class EstimationResult:
    """Estimate plus diagnostics for one snapshot batch.

    ``theta`` is sorted ascending.  ``lam`` is ``None`` for the
    uniform-noise target.  ``iters_stage3`` counts inner Newton
    iterations for the joint targets and outer alternations for the
    alternating ones.  ``flop_estimate`` applies the closed-form
    per-iteration polynomials to the recorded iteration counts.
    """

    target: str
    theta: np.ndarray
    lam: np.ndarray | None
    cost: float
    converged: bool
    diverged_lambda: bool
    theta_initial: np.ndarray
    lam_initial: np.ndarray | None
    stage1: tuple
    stage3: StageCounts | None
    flop_estimate: float
    note: str = ""

    @property
    def iters_stage1(self) -> int:
        return sum(s.newton_iters for s in self.stage1)

    @property
    def iters_stage3(self) -> int:
        return self.stage3.newton_iters if self.stage3 is not None else 0


def _default_grid(m: int) -> int:
    return 16 * m


def default_exclusion(geometry: ArrayGeometry) -> float:
    """Half the standard beamwidth: pi over the aperture in half-wavelengths."""
    return np.pi / geometry.aperture


def ap_add_angle(
    r_z: SampleCovariance,
    geometry: ArrayGeometry,
    theta,
    grid_size: int | None = None,
    exclusion_radius: float | None = None,
    refine: bool = True,
):
    """Insert one source angle by a projection line search.

    Scans a uniform grid of midpoint angles over (-pi/2, pi/2), skipping
    candidates within ``exclusion_radius`` of an angle already present,
    and scores each candidate by the increase of the uniform-noise cost
    when its steering vector joins the current set.  The winner gets a
    three-point parabolic refinement when its grid neighbors exist.

    Returns ``(theta_extended, n_evaluated)`` with the new angle
    appended; ``n_evaluated`` counts scored candidates (line-search cost
    evaluations) for the flop model.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    m = geometry.m
    if theta.size >= m:
        raise ValueError("cannot insert more sources than sensors")
    grid = grid_size or _default_grid(m)
    r_excl = default_exclusion(geometry) if exclusion_radius is None else exclusion_radius
    if r_excl <= 0:
        raise ValueError("exclusion radius must be positive")

    centers = -_HALF_PI + np.pi * (np.arange(grid) + 0.5) / grid
    allowed = np.ones(grid, dtype=bool)
    for t in theta:
        allowed &= np.abs(centers - t) >= r_excl
    if not allowed.any():
        raise ValueError("exclusion radius removed every line-search candidate")

    q = None
    if theta.size:
        q, _ = np.linalg.qr(steering_set(geometry, theta).phi)

    scores = np.full(grid, -np.inf)
    n_evaluated = int(allowed.sum())

    def _score(idx):
        phi = np.exp(
            1j * np.pi * geometry.positions[:, None] * np.sin(centers[idx])[None, :]
        )
        resid = phi if q is None else phi - q @ (q.conj().T @ phi)
        norms = np.einsum("ij,ij->j", resid.conj(), resid).real
        vals = np.einsum("ij,ij->j", resid.conj(), r_z.matrix @ resid).real
        ok = norms > m * 1e-24
        s = np.full(idx.shape, -np.inf)
        s[ok] = vals[ok] / norms[ok]
        return s

    scores[allowed] = _score(np.nonzero(allowed)[0])
    best = int(np.argmax(scores))
    theta_star = centers[best]

    if refine and 0 < best < grid - 1:
        for nb in (best - 1, best + 1):
            if not np.isfinite(scores[nb]):
                scores[nb] = _score(np.array([nb]))[0]
                n_evaluated += 1
        s_m, s_0, s_p = scores[best - 1], scores[best], scores[best + 1]
        denom = s_m - 2.0 * s_0 + s_p
        if np.isfinite(denom) and denom < 0:
            delta = 0.5 * (s_m - s_p) / denom * (np.pi / grid)
            candidate = theta_star + delta
            if abs(candidate) < _HALF_PI and (
                theta.size == 0 or np.abs(theta - candidate).min() >= r_excl
            ):
                theta_star = candidate

    return np.append(theta, theta_star), n_evaluated


def init_noise(r_z: SampleCovariance, projection: np.ndarray) -> np.ndarray:
    """Covariance-fitting initializer for the noise parameters.

    Given the uniform-noise projector ``P_o`` at the stage-1 angles,

        lambda_m = sqrt( (1 - [P_o]_mm) / [R_z (I - P_o)]_mm ),

    falling back per entry to the signal-free value ``[R_z]_mm^(-1/2)``
    whenever the projector diagonal is within 1e-9 of one or the
    denominator is not positive.
    """
    rz = r_z.matrix
    diag_p = np.real(np.diagonal(projection))
    denom = np.real(np.diagonal(rz)) - np.real(np.einsum("ij,ji->i", rz, projection))
    numer = 1.0 - diag_p
    diag_r = np.real(np.diagonal(rz))
    if np.any(diag_r <= 0):
        raise ValueError("sample covariance has a nonpositive diagonal entry")
    bad = (diag_p >= 1.0 - 1e-9) | (denom <= 0)
    lam = np.empty(rz.shape[0])
    good = ~bad
    lam[good] = np.sqrt(numer[good] / denom[good])
    lam[bad] = 1.0 / np.sqrt(diag_r[bad])
    return lam


def _normalize_target(target: str) -> str:
    t = target.strip().lower().replace("_", "-")
    if t not in TARGETS:
        raise ValueError(f"unknown target {target!r}; choose from {TARGETS}")
    return t


def _stage_counts(out: NewtonOutcome, candidates: int = 0) -> StageCounts:
    return StageCounts(
        candidates=candidates,
        newton_iters=out.iterations,
        grad_evals=out.n_grad_evals,
        cost_evals=out.n_cost_evals,
    )


def apn_estimate(
    z,
    geometry: ArrayGeometry,
    k: int,
    target: str = "sml",
    options: NewtonOptions | None = None,
    grid_size: int | None = None,
    exclusion_radius: float | None = None,
    counter: FlopCounter | None = None,
) -> EstimationResult:
    """Run the full estimation pipeline on a snapshot matrix.

    Parameters
    ----------
    z : ndarray or SampleCovariance
        M x N snapshot matrix, or a precomputed sample covariance.
    geometry : ArrayGeometry
    k : int
        Number of sources, 1 <= k < M.
    target : str
        One of :data:`TARGETS`.
    options : NewtonOptions, optional
        ``hessian_mode`` is forced to 'reduced' for the ``sml-red``
        target.
    counter : FlopCounter, optional
        Accumulates measured workspace-level operation counts (the
        reported ``flop_estimate`` always comes from the closed-form
        polynomials instead).
    """
    target = _normalize_target(target)
    opts = options or NewtonOptions()
    if target == "sml-red":
        opts = dataclasses.replace(opts, hessian_mode="reduced")
    if not isinstance(z, SampleCovariance):
        z = np.asarray(z, dtype=complex)
        if z.ndim != 2 or z.shape[0] != geometry.m:
            raise ValueError("snapshot matrix must be M x N")
        z = sample_covariance(z, counter=counter)
    if z.m != geometry.m:
        raise ValueError("covariance size does not match the geometry")
    if not (1 <= k < geometry.m):
        raise ValueError("need 1 <= k < M")

    rz = z
    m = geometry.m
    ones = np.ones(m)

    def u_cost(theta):
        try:
            ws = build_workspace(rz, steering_set(geometry, theta), ones, counter)
        except (RankDeficiencyError, ValueError):
            return -np.inf
        return cost_dml_uniform(ws)

    def u_grad_hess(theta):
        ws = build_workspace(rz, steering_set(geometry, theta), ones, counter)
        return grad_dml_uniform(ws), hess_dml_uniform(ws)

    # -- stage 1: insertion line searches + uniform Newton refinement -----
    theta = np.empty(0)
    stage1 = []
    conv1 = True
    for _ in range(k):
        theta, n_cand = ap_add_angle(
            rz, geometry, theta, grid_size=grid_size, exclusion_radius=exclusion_radius
        )
        out = newton_maximize(u_cost, u_grad_hess, theta, opts)
        theta = out.x
        conv1 = conv1 and out.converged
        stage1.append(_stage_counts(out, candidates=n_cand))
    order = np.argsort(theta)
    theta = theta[order]
    stage1 = tuple(stage1)
    theta_initial = theta.copy()

    if target == "dmlo":
        flop_est = flop_model.pipeline_flop_estimate(
            m, k, stage1, None, target, n_snapshots=rz.n_snapshots
        )
        return EstimationResult(
            target=target,
            theta=theta,
            lam=None,
            cost=u_cost(theta),
            converged=conv1,
            diverged_lambda=False,
            theta_initial=theta_initial,
            lam_initial=None,
            stage1=stage1,
            stage3=None,
            flop_estimate=flop_est,
        )

    # -- stage 2: noise initialization ------------------------------------
    ws_u = build_workspace(rz, steering_set(geometry, theta), ones, counter)
    lam0 = init_noise(rz, ws_u.projector())

    # -- stage 3: joint or alternating Newton ------------------------------
    which = "D" if target.startswith("dml") else "S"
    reduced = opts.hessian_mode in ("reduced", "approx")
    cost_of = cost_dml if which == "D" else cost_sml

    def build(theta_part, lam_part):
        return build_workspace(
            rz, steering_set(geometry, theta_part), lam_part, counter
        )

    def j_cost(x):
        try:
            return cost_of(build(x[:k], x[k:]))
        except (RankDeficiencyError, IndefiniteCovarianceError, ValueError):
            return -np.inf

    def j_grad_hess(x):
        ws = build(x[:k], x[k:])
        return grad_hess(ws, which, reduced)

    x0 = np.concatenate([theta, lam0])
    positive = np.zeros(k + m, dtype=bool)
    positive[k:] = True
    note = ""

    if target in ("dml", "sml", "sml-red"):
        out = newton_maximize(j_cost, j_grad_hess, x0, opts, positive=positive)
        x_fin = out.x
        stage3 = _stage_counts(out)
        converged = out.converged
        diverged = out.diverged
        cost = out.cost
        note = out.note
    else:
        x_fin, stage3, converged, diverged, cost, note = _alternating(
            j_cost, j_grad_hess, x0, k, m, opts
        )

    order = np.argsort(x_fin[:k])
    theta_fin = x_fin[:k][order]
    flop_est = flop_model.pipeline_flop_estimate(
        m, k, stage1, stage3, target, n_snapshots=rz.n_snapshots
    )
    return EstimationResult(
        target=target,
        theta=theta_fin,
        lam=x_fin[k:].copy(),
        cost=cost,
        converged=converged,
        diverged_lambda=diverged,
        theta_initial=theta_initial,
        lam_initial=lam0,
        stage1=stage1,
        stage3=stage3,
        flop_estimate=flop_est,
        note=note,
    )


def _alternating(j_cost, j_grad_hess, x0, k, m, opts: NewtonOptions):
    """Outer alternation of single damped Newton sweeps over theta and lambda."""
    x = x0.copy()
    one_step = dataclasses.replace(opts, max_iters=1)
    lam_mask = np.ones(m, dtype=bool)
    grad_evals = cost_evals = outer = 0
    converged = diverged = False
    cost = j_cost(x)
    note = ""

    def t_cost(t):
        return j_cost(np.concatenate([t, x[k:]]))

    def t_gh(t):
        g, h = j_grad_hess(np.concatenate([t, x[k:]]))
        return g[:k], h[:k, :k]

    def l_cost(lam):
        return j_cost(np.concatenate([x[:k], lam]))

    def l_gh(lam):
        g, h = j_grad_hess(np.concatenate([x[:k], lam]))
        return g[k:], h[k:, k:]

    for _ in range(opts.max_outer):
        x_prev = x.copy()
        out_t = newton_maximize(t_cost, t_gh, x[:k], one_step)
        x[:k] = out_t.x
        out_l = newton_maximize(l_cost, l_gh, x[k:], one_step, positive=lam_mask)
        x[k:] = out_l.x
        outer += 1
        grad_evals += out_t.n_grad_evals + out_l.n_grad_evals
        cost_evals += out_t.n_cost_evals + out_l.n_cost_evals
        cost = max(out_t.cost, out_l.cost)
        if out_t.note.startswith("derivative") or out_l.note.startswith("derivative"):
            note = out_t.note or out_l.note
            break
        if np.abs(x - x_prev).max() < opts.step_tol:
            converged = True
            break

    stage3 = StageCounts(
        candidates=0, newton_iters=outer, grad_evals=grad_evals, cost_evals=cost_evals
    )
    return x, stage3, converged, diverged, cost, note
