"""Randomized self-verification of derivatives and workspace identities.

Draws generic problem instances (jittered array, separated angles, a
positive-definite sample covariance synthesized at nearby true
parameters) and checks, per instance,

- analytic gradients of both concentrated costs against central finite
  differences, blockwise over the angle and noise coordinates,
- analytic full Hessians the same way,
- the uniform-noise gradient and exact Hessian over angles alone,
- the projector, trace-compression and inverse-factorization
  identities the whitened workspace is built on.

The same engine backs the command-line ``verify`` subcommand and the
test suite; failures carry enough text to locate the instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arrays import ArrayGeometry, StochasticModel, steering_set, stream_rng, synthesize
from .derivatives import (
    block_rel_err,
    fd_gradient,
    fd_hessian,
    grad_dml_uniform,
    grad_hess,
    hess_dml_uniform,
)
from .workspace import build_workspace, cost_dml, cost_dml_uniform, cost_sml, sample_covariance

__all__ = ["Instance", "VerifyReport", "random_instance", "run_verification"]


@dataclass(frozen=True)
class Instance:
    """One random check point: geometry, evaluation parameters, covariance."""

    geometry: ArrayGeometry
    k: int
    theta: np.ndarray
    lam: np.ndarray
    z: np.ndarray


@dataclass
class VerifyReport:
    instances: int
    checks: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _separated_angles(rng, k: int, min_gap: float, lo: float = -1.2, hi: float = 1.2):
    for _ in range(200):
        t = np.sort(rng.uniform(lo, hi, k))
        if k == 1 or float(np.diff(t).min()) >= min_gap:
            return t
    # rejection is unlucky only for crowded draws; fall back to a jittered
    # equispaced template that respects the gap by construction
    base = np.linspace(lo, hi, k + 2)[1:-1]
    slack = ((hi - lo) / (k + 1) - min_gap) / 2.0
    return base + rng.uniform(-max(slack, 0.0), max(slack, 0.0), k)


def random_instance(rng, m_max: int = 12, k_max: int = 4) -> Instance:
    """Draw a generic instance with a full-rank sample covariance.

    Sensor gaps are uniform in [0.6, 1.5] half-wavelengths so the array
    is never exactly uniform; angles keep at least half a beamwidth of
    separation, which keeps the steering matrix comfortably full rank.
    """
    m = int(rng.integers(3, m_max + 1))
    k = int(rng.integers(1, min(k_max, m - 1) + 1))
    gaps = 0.6 + rng.uniform(0.0, 0.9, m - 1)
    geometry = ArrayGeometry(np.concatenate([[0.0], np.cumsum(gaps)]))
    min_gap = min(0.75, max(0.2, 0.5 * np.pi / geometry.aperture))
    theta = _separated_angles(rng, k, min_gap)
    lam = rng.uniform(0.5, 2.0, m)
    # synthesize near, not at, the evaluation point: derivatives must
    # check out at generic parameters, not just stationary ones
    theta_true = theta + rng.uniform(-0.1, 0.1, k)
    a = (rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))) / np.sqrt(2 * k)
    model = StochasticModel(a @ a.conj().T + 0.1 * np.eye(k))
    lam_true = rng.uniform(0.5, 2.0, m)
    z = synthesize(geometry, theta_true, model, lam_true, 3 * m, rng)
    return Instance(geometry=geometry, k=k, theta=theta, lam=lam, z=z)


def _check(report: VerifyReport, ok: bool, text: str):
    report.checks += 1
    if not ok:
        report.failures.append(text)


def _verify_instance(
    report: VerifyReport,
    idx: int,
    inst: Instance,
    grad_rtol: float,
    hess_rtol: float,
    identity_tol: float,
    projector_tol: float,
):
    geom, k, m = inst.geometry, inst.k, inst.geometry.m
    rz = sample_covariance(inst.z)
    x0 = np.concatenate([inst.theta, inst.lam])

    def joint(which):
        def f(x):
            ws = build_workspace(rz, steering_set(geom, x[:k]), x[k:])
            return cost_dml(ws) if which == "D" else cost_sml(ws)

        return f

    ws0 = build_workspace(rz, steering_set(geom, inst.theta), inst.lam)
    blocks = (("theta", slice(0, k)), ("lambda", slice(k, k + m)))
    for which in ("D", "S"):
        f = joint(which)
        g, h = grad_hess(ws0, which=which)
        g_fd = fd_gradient(f, x0)
        for name, sl in blocks:
            err = block_rel_err(g[sl], g_fd[sl])
            _check(
                report,
                err <= grad_rtol,
                f"instance {idx}: {which} gradient {name} block rel err {err:.2e}",
            )
        h_fd = fd_hessian(f, x0)
        for aname, asl in blocks:
            for bname, bsl in blocks:
                if bsl.start < asl.start:
                    continue
                err = block_rel_err(h[asl, bsl], h_fd[asl, bsl])
                _check(
                    report,
                    err <= hess_rtol,
                    f"instance {idx}: {which} Hessian {aname}/{bname} block rel err {err:.2e}",
                )

    # uniform-noise specialization, angles only
    ones = np.ones(m)

    def f_u(theta):
        return cost_dml_uniform(build_workspace(rz, steering_set(geom, theta), ones))

    ws_u = build_workspace(rz, steering_set(geom, inst.theta), ones)
    err = block_rel_err(grad_dml_uniform(ws_u), fd_gradient(f_u, inst.theta))
    _check(report, err <= grad_rtol, f"instance {idx}: uniform gradient rel err {err:.2e}")
    err = block_rel_err(hess_dml_uniform(ws_u, exact=True), fd_hessian(f_u, inst.theta))
    _check(report, err <= hess_rtol, f"instance {idx}: uniform Hessian rel err {err:.2e}")

    # workspace identities
    p = ws0.projector()
    eye = np.eye(m)
    err = float(np.abs(p @ p - p).max())
    _check(report, err <= projector_tol, f"instance {idx}: projector idempotency {err:.2e}")
    err = float(np.abs(p - p.conj().T).max())
    _check(report, err <= projector_tol, f"instance {idx}: projector Hermitianity {err:.2e}")
    err = abs(float(np.trace(ws0.p_z @ ws0.r_zl).real) - k)
    _check(report, err <= identity_tol, f"instance {idx}: tr(P_z R_zl) - K = {err:.2e}")
    left = eye - p + ws0.p_z
    right = eye - p + p @ ws0.r_zl @ p
    err = float(np.abs(left @ right - eye).max())
    _check(report, err <= identity_tol, f"instance {idx}: inverse identity {err:.2e}")


def run_verification(
    instances: int = 50,
    seed: int = 7,
    grad_rtol: float = 1e-5,
    hess_rtol: float = 1e-4,
    identity_tol: float = 1e-9,
    projector_tol: float = 1e-10,
    m_max: int = 12,
    k_max: int = 4,
) -> VerifyReport:
    """Run both suites over random instances and collect failures."""
    if instances < 1:
        raise ValueError("need at least one instance")
    report = VerifyReport(instances=instances)
    rng = stream_rng(seed)
    for idx in range(instances):
        inst = random_instance(rng, m_max=m_max, k_max=k_max)
        _verify_instance(report, idx, inst, grad_rtol, hess_rtol, identity_tol, projector_tol)
    return report
