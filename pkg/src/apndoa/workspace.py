"""Whitened workspace and concentrated likelihood costs.

Everything downstream (costs, gradients, Hessians) is evaluated on a
``WhitenedWorkspace`` built once per (theta, lambda) point.  The
workspace keeps the thin QR factorization of the whitened steering
matrix ``Phi = diag(lambda) @ Phi_o`` and derives every projection and
pseudoinverse from it; the Gram matrix ``Phi^H Phi`` is never inverted
explicitly.

Cost conventions (all three are *maximized*):

* ``cost_dml_uniform``: -N * tr{(I - P_o) R_z}, the uniform-noise
  deterministic cost used by the line-search stage;
* ``cost_dml``: N * (2 log|Lambda| - tr{(I - P) R_zl}) with
  ``R_zl = Lambda R_z Lambda`` the whitened sample covariance;
* ``cost_sml``: cost_dml + cost_lc where ``cost_lc = -N log|C|`` and
  ``C = I - P + P R_zl P`` is evaluated through the K x K compression
  ``|C| = |Q^H R_zl Q|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .arrays import SteeringSet, _check_noise

__all__ = [
    "RankDeficiencyError",
    "IndefiniteCovarianceError",
    "FlopCounter",
    "SampleCovariance",
    "WhitenedWorkspace",
    "sample_covariance",
    "build_workspace",
    "cost_dml_uniform",
    "cost_dml",
    "cost_lc",
    "cost_sml",
    "concentrated_rs",
]

# relative tolerance on the QR diagonal below which the steering matrix
# is treated as rank deficient (angles coalesced or mirror-ambiguous)
RANK_RTOL = 1e-12


class RankDeficiencyError(np.linalg.LinAlgError):
    """Steering matrix numerically rank deficient (angles too close)."""


class IndefiniteCovarianceError(np.linalg.LinAlgError):
    """Compressed covariance Q^H R_zl Q is not positive definite."""


@dataclass
class FlopCounter:
    """Coarse running count of real floating-point operations.

    The accounting convention is stated explicitly: one complex
    multiply-add is ``cmuladd`` real flops (8 by default: 4 multiplies
    and 4 adds), one complex multiply is 6, one real multiply-add is 2.
    Counts are approximate by design; they exist so demos and reports
    can show where the work goes, not to replace the closed-form
    per-iteration polynomials in :mod:`apndoa.flops`.
    """

    cmuladd: int = 8
    total: float = 0.0

    def add(self, flops: float):
        self.total += flops

    def add_gemm(self, m: int, k: int, n: int):
        """Complex matrix product (m x k) @ (k x n)."""
        self.total += self.cmuladd * m * k * n

    def add_herk(self, m: int, k: int):
        """Hermitian rank-k update, only one triangle counted."""
        self.total += self.cmuladd * m * (m + 1) * k / 2

    def add_qr(self, m: int, k: int):
        # Householder QR, complex: ~ 4*(m*k^2 - k^3/3) cmuladds, plus the
        # explicit thin Q build of roughly the same size.
        self.total += self.cmuladd * 8 * (m * k * k - k ** 3 / 3.0)

    def add_cholesky(self, k: int):
        self.total += self.cmuladd * k ** 3 / 3.0

    def add_real(self, flops: float):
        self.total += flops


@dataclass(frozen=True)
class SampleCovariance:
    """Sample covariance R_z = (1/N) Z Z^H together with the snapshot count."""

    matrix: np.ndarray
    n_snapshots: int

    def __post_init__(self):
        r = np.asarray(self.matrix, dtype=complex)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError("covariance must be square")
        if self.n_snapshots < 1:
            raise ValueError("snapshot count must be positive")
        scale = max(np.abs(r).max(), 1.0)
        if np.abs(r - r.conj().T).max() > 1e-12 * scale:
            raise ValueError("covariance must be Hermitian")
        object.__setattr__(self, "matrix", r)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]


def sample_covariance(z: np.ndarray, counter: FlopCounter | None = None) -> SampleCovariance:
    """Form R_z = (1/N) Z Z^H from an M x N snapshot matrix."""
    z = np.asarray(z, dtype=complex)
    if z.ndim != 2:
        raise ValueError("snapshot matrix must be M x N")
    m, n = z.shape
    if counter is not None:
        counter.add_herk(m, n)
    return SampleCovariance(matrix=z @ z.conj().T / n, n_snapshots=n)


@dataclass
class WhitenedWorkspace:
    """Factorizations shared by cost, gradient and Hessian evaluations.

    Built by :func:`build_workspace`; treat instances as read-only.
    ``q_factor``/``r_factor`` come from the thin QR of ``phi``, so
    ``pinv = r_factor^-1 q_factor^H`` and the projector is applied as
    ``Q (Q^H A)`` without ever forming ``(Phi^H Phi)^-1`` directly.

    The stochastic-cost pieces (``m_zl``, ``p_z``, ``logdet_c``) need the
    compressed covariance ``b = Q^H R_zl Q`` to be positive definite and
    raise :class:`IndefiniteCovarianceError` otherwise; the deterministic
    cost path never touches them.
    """

    steering: SteeringSet
    lam: np.ndarray
    n_snapshots: int
    r_z: np.ndarray            # unwhitened sample covariance
    phi: np.ndarray            # whitened steering matrix Lambda Phi_o
    d1: np.ndarray             # whitened first derivatives Lambda dPhi_o
    d2: np.ndarray             # whitened second derivatives
    q_factor: np.ndarray       # thin Q, M x K
    r_factor: np.ndarray       # upper-triangular R, K x K
    pinv: np.ndarray           # Phi^+ = R^-1 Q^H, K x M
    minv: np.ndarray           # (Phi^H Phi)^-1, K x K
    r_zl: np.ndarray           # whitened sample covariance Lambda R_z Lambda
    b: np.ndarray              # compressed covariance Q^H R_zl Q, K x K
    counter: FlopCounter | None = None
    _b_chol: tuple | None = field(default=None, repr=False)
    _b_error: Exception | None = field(default=None, repr=False)
    _m_zl: np.ndarray | None = field(default=None, repr=False)
    _logdet_c: float | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return self.phi.shape[0]

    @property
    def k(self) -> int:
        return self.phi.shape[1]

    @property
    def theta(self) -> np.ndarray:
        return self.steering.theta

    # -- projector helpers ------------------------------------------------

    def project(self, a: np.ndarray) -> np.ndarray:
        """P @ a through the thin factor, P = Q Q^H."""
        if self.counter is not None:
            self.counter.add_gemm(self.k, self.m, a.shape[1] if a.ndim == 2 else 1)
            self.counter.add_gemm(self.m, self.k, a.shape[1] if a.ndim == 2 else 1)
        return self.q_factor @ (self.q_factor.conj().T @ a)

    def perp(self, a: np.ndarray) -> np.ndarray:
        """(I - P) @ a."""
        return a - self.project(a)

    def perp_rows(self, a: np.ndarray) -> np.ndarray:
        """a @ (I - P) for wide matrices."""
        if self.counter is not None:
            self.counter.add_gemm(a.shape[0], self.m, self.k)
            self.counter.add_gemm(a.shape[0], self.k, self.m)
        return a - (a @ self.q_factor) @ self.q_factor.conj().T

    def projector(self) -> np.ndarray:
        """Dense M x M projector Q Q^H (small M only; debugging and demos)."""
        return self.q_factor @ self.q_factor.conj().T

    # -- stochastic-path factors ------------------------------------------

    def _require_spd(self):
        if self._b_error is not None:
            raise self._b_error
        if self._b_chol is None:
            try:
                self._b_chol = cho_factor(self.b, lower=True)
            except np.linalg.LinAlgError as exc:
                self._b_error = IndefiniteCovarianceError(
                    "compressed covariance Q^H R_zl Q is not positive definite"
                )
                raise self._b_error from exc
        return self._b_chol

    def b_solve(self, a: np.ndarray) -> np.ndarray:
        """Solve (Q^H R_zl Q) x = a via the cached Cholesky factor."""
        chol = self._require_spd()
        if self.counter is not None:
            cols = a.shape[1] if a.ndim == 2 else 1
            self.counter.add_gemm(self.k, self.k, cols)
        return cho_solve(chol, a)

    @property
    def m_zl(self) -> np.ndarray:
        """(Phi^H R_zl Phi)^-1 = R^-1 B^-1 R^-H."""
        if self._m_zl is None:
            binv = self.b_solve(np.eye(self.k, dtype=complex))
            rinv_b = solve_triangular(self.r_factor, binv)
            self._m_zl = solve_triangular(
                self.r_factor, rinv_b.conj().T
            ).conj().T
        return self._m_zl

    @property
    def p_z(self) -> np.ndarray:
        """Oblique factor P_z = Phi M_zl Phi^H = Q B^-1 Q^H."""
        qb = self.b_solve(self.q_factor.conj().T)
        if self.counter is not None:
            self.counter.add_gemm(self.m, self.k, self.m)
        return self.q_factor @ qb

    @property
    def logdet_c(self) -> float:
        """log|C| with C = I - P + P R_zl P, via |C| = |Q^H R_zl Q|."""
        if self._logdet_c is None:
            chol = self._require_spd()
            self._logdet_c = 2.0 * float(
                np.sum(np.log(np.real(np.diagonal(chol[0]))))
            )
        return self._logdet_c

    def trace_perp(self) -> float:
        """tr{(I - P) R_zl} = tr{R_zl} - tr{B}."""
        return float(np.real(np.trace(self.r_zl)) - np.real(np.trace(self.b)))


def build_workspace(
    r_z: SampleCovariance,
    steering: SteeringSet,
    lam,
    counter: FlopCounter | None = None,
) -> WhitenedWorkspace:
    """Assemble the whitened workspace at a (theta, lambda) point.

    Raises
    ------
    RankDeficiencyError
        If the whitened steering matrix is numerically rank deficient,
        which happens when two angles (or their steering responses)
        coalesce.
    """
    if not isinstance(r_z, SampleCovariance):
        raise TypeError("r_z must be a SampleCovariance")
    m, k = steering.phi.shape
    if r_z.m != m:
        raise ValueError("covariance size does not match the steering set")
    lam = _check_noise(lam, m)

    phi = lam[:, None] * steering.phi
    d1 = lam[:, None] * steering.d1
    d2 = lam[:, None] * steering.d2

    if counter is not None:
        counter.add_qr(m, k)
    q, r = np.linalg.qr(phi)
    diag = np.abs(np.diagonal(r))
    if diag.min() <= RANK_RTOL * diag.max():
        raise RankDeficiencyError(
            "whitened steering matrix is numerically rank deficient"
        )

    eye_k = np.eye(k, dtype=complex)
    rinv = solve_triangular(r, eye_k)
    pinv = rinv @ q.conj().T
    minv = rinv @ rinv.conj().T

    # row/column scaling instead of dense diagonal products
    r_zl = (lam[:, None] * r_z.matrix) * lam[None, :]
    if counter is not None:
        counter.add_real(4.0 * m * m)       # the two scalings, complex*real
        counter.add_gemm(k, m, m)
        counter.add_gemm(k, m, k)
        counter.add_gemm(k, k, k)           # rinv products
        counter.add_gemm(k, m, k)
    b = (q.conj().T @ r_zl) @ q

    return WhitenedWorkspace(
        steering=steering,
        lam=lam,
        n_snapshots=r_z.n_snapshots,
        r_z=r_z.matrix,
        phi=phi,
        d1=d1,
        d2=d2,
        q_factor=q,
        r_factor=r,
        pinv=pinv,
        minv=minv,
        r_zl=r_zl,
        b=b,
        counter=counter,
    )


def _trace_cost(ws: WhitenedWorkspace) -> float:
    if ws.counter is not None:
        ws.counter.add_real(4.0 * ws.m)
    return -ws.n_snapshots * ws.trace_perp()


def cost_dml_uniform(ws: WhitenedWorkspace) -> float:
    """Uniform-noise deterministic cost -N tr{(I - P_o) R_z}.

    The workspace must have been built with lambda identically one; the
    arithmetic path is then shared bit-for-bit with :func:`cost_dml`,
    whose log term vanishes exactly.
    """
    if np.any(ws.lam != 1.0):
        raise ValueError("uniform cost requires a workspace with lambda == 1")
    return _trace_cost(ws)


def cost_dml(ws: WhitenedWorkspace) -> float:
    """Concentrated deterministic cost N(2 log|Lambda| - tr{(I-P) R_zl})."""
    log_term = 2.0 * ws.n_snapshots * float(np.sum(np.log(ws.lam)))
    return log_term + _trace_cost(ws)


def cost_lc(ws: WhitenedWorkspace) -> float:
    """Stochastic correction -N log|C|, C = I - P + P R_zl P."""
    return -ws.n_snapshots * ws.logdet_c


def cost_sml(ws: WhitenedWorkspace) -> float:
    """Concentrated stochastic cost, exactly cost_dml + cost_lc."""
    return cost_dml(ws) + cost_lc(ws)


def concentrated_rs(ws: WhitenedWorkspace) -> np.ndarray:
    """Concentrated source covariance Phi^+ R_zl Phi^+H - (Phi^H Phi)^-1.

    This is the stochastic-ML maximizer of the source covariance for
    fixed (theta, lambda); it is Hermitian by construction but not
    necessarily positive semidefinite at finite snapshot counts.
    """
    t = ws.pinv @ ws.r_zl
    rs = t @ ws.pinv.conj().T - ws.minv
    return 0.5 * (rs + rs.conj().T)
