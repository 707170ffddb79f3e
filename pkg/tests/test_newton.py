"""Damped Newton ascent on analytic toy problems.

Quadratics give exact one-step answers, a pure log barrier exercises the
divergence detector, and small pathological callables cover the guard
paths (infeasible starts, failed line searches, derivative errors).
"""

import numpy as np
import pytest
from scipy.linalg import cho_solve

from apndoa import (
    NewtonOptions,
    NewtonOutcome,
    RankDeficiencyError,
    modified_cholesky,
    newton_maximize,
)


def quadratic(a_mat, x_star):
    def cost(x):
        d = x - x_star
        return -0.5 * d @ a_mat @ d

    def gh(x):
        return -a_mat @ (x - x_star), -a_mat

    return cost, gh


def test_one_newton_step_solves_a_concave_quadratic():
    a_mat = np.array([[3.0, 1.0], [1.0, 2.0]])
    x_star = np.array([0.7, -1.3])
    cost, gh = quadratic(a_mat, x_star)
    out = newton_maximize(cost, gh, np.array([5.0, 5.0]))
    assert out.converged and not out.diverged
    assert out.iterations == 1
    assert np.abs(out.x - x_star).max() < 1e-10
    assert out.cost == pytest.approx(0.0, abs=1e-18)


def test_start_at_the_maximum_converges_without_stepping():
    a_mat = np.eye(3)
    x_star = np.array([1.0, 2.0, 3.0])
    cost, gh = quadratic(a_mat, x_star)
    out = newton_maximize(cost, gh, x_star)
    assert out.converged
    assert out.iterations == 0
    assert out.n_grad_evals == 1
    assert out.cost_trace == [0.0]


def test_cost_trace_is_strictly_increasing():
    def cost(x):
        return -((x[0] - 1.0) ** 4) - (x[1] + 2.0) ** 2

    def gh(x):
        g = np.array([-4.0 * (x[0] - 1.0) ** 3, -2.0 * (x[1] + 2.0)])
        h = np.diag([-12.0 * (x[0] - 1.0) ** 2, -2.0])
        return g, h

    out = newton_maximize(cost, gh, np.array([3.0, 1.0]))
    assert out.converged
    assert out.iterations > 1
    diffs = np.diff(out.cost_trace)
    assert (diffs > 0).all()
    assert abs(out.x[1] + 2.0) < 1e-8


def test_modified_cholesky_keeps_negative_definite_untouched():
    h = np.array([[-4.0, 1.0], [1.0, -3.0]])
    factor, tau = modified_cholesky(h)
    assert tau == 0.0
    g = np.array([1.0, 2.0])
    assert np.allclose(cho_solve(factor, g), np.linalg.solve(-h, g))


def test_modified_cholesky_shifts_an_indefinite_matrix():
    h = np.diag([1.0, -1.0])
    factor, tau = modified_cholesky(h)
    assert tau > 1.0  # must override the +1 curvature
    shifted = -h + tau * np.eye(2)
    assert (np.linalg.eigvalsh(shifted) > 0).all()


def test_modified_cholesky_rejects_non_finite_input():
    with pytest.raises(ValueError):
        modified_cholesky(np.array([[np.nan, 0.0], [0.0, -1.0]]))


def test_divergence_detector_on_a_log_barrier():
    # cost 2N sum(log lam) grows without bound; Newton doubles lam each
    # iteration until the growth clamp, so the positive coordinates must
    # trip the divergence factor.
    n = 100.0

    def cost(x):
        return 2.0 * n * np.sum(np.log(x))

    def gh(x):
        return 2.0 * n / x, np.diag(-2.0 * n / x**2)

    x0 = np.array([1.0, 2.0])
    out = newton_maximize(cost, gh, x0, positive=np.array([True, True]))
    assert out.diverged and not out.converged
    assert "diverged" in out.note
    trace = np.array(out.pos_max_trace)
    assert trace[0] == 2.0
    assert (np.diff(trace) > 0).all()
    assert trace[-1] > NewtonOptions().divergence_factor * trace[0]
    assert trace[-2] <= NewtonOptions().divergence_factor * trace[0]


def test_growth_clamp_bounds_each_iteration():
    n = 100.0

    def cost(x):
        return 2.0 * n * np.sum(np.log(x))

    def gh(x):
        return 2.0 * n / x, np.diag(-2.0 * n / x**2)

    opts = NewtonOptions(lam_growth=1.5)
    out = newton_maximize(
        cost, gh, np.array([1.0]), options=opts, positive=np.array([True])
    )
    trace = np.array(out.pos_max_trace)
    ratios = trace[1:] / trace[:-1]
    assert ratios.max() <= 1.5 + 1e-12


def test_floor_clamp_keeps_positive_coordinates_positive():
    # the unconstrained Newton target is -5, far below zero
    def cost(x):
        return -0.5 * np.sum((x + 5.0) ** 2)

    def gh(x):
        return -(x + 5.0), -np.eye(x.size)

    out = newton_maximize(
        cost, gh, np.array([1.0]), positive=np.array([True])
    )
    assert (np.asarray(out.x) > 0).all()
    # each accepted step shrinks by exactly the floor factor
    assert out.x[0] == pytest.approx(NewtonOptions().lam_floor**out.iterations)


def test_infeasible_start_raises():
    with pytest.raises(ValueError):
        newton_maximize(lambda x: np.inf, lambda x: (x, -np.eye(1)), np.array([1.0]))
    with pytest.raises(ValueError):
        newton_maximize(
            lambda x: 0.0,
            lambda x: (x, -np.eye(2)),
            np.array([1.0, -1.0]),
            positive=np.array([True, True]),
        )
    with pytest.raises(ValueError):
        newton_maximize(
            lambda x: 0.0,
            lambda x: (x, -np.eye(2)),
            np.array([1.0, 1.0]),
            positive=np.array([True]),
        )


def test_failed_line_search_stops_with_a_note():
    calls = {"n": 0}

    def cost(x):
        calls["n"] += 1
        return 0.0 if calls["n"] == 1 else -np.inf

    def gh(x):
        return np.array([1.0]), np.array([[-1.0]])

    out = newton_maximize(cost, gh, np.array([0.0]))
    assert out.iterations == 0
    assert not out.converged
    assert "line search" in out.note
    # every backtracking trial was counted
    assert out.n_cost_evals > 10


def test_derivative_errors_terminate_gracefully():
    def gh(x):
        raise RankDeficiencyError("angles coalesced")

    out = newton_maximize(lambda x: 0.0, gh, np.array([0.0]))
    assert isinstance(out, NewtonOutcome)
    assert not out.converged
    assert "derivative evaluation failed" in out.note


def test_options_validation():
    with pytest.raises(ValueError):
        NewtonOptions(hessian_mode="fast")
    with pytest.raises(ValueError):
        NewtonOptions(backtrack=1.0)
    with pytest.raises(ValueError):
        NewtonOptions(lam_floor=0.0)
    with pytest.raises(ValueError):
        NewtonOptions(lam_growth=1.0)


def test_max_iters_caps_the_run():
    # quartic ridge approached slowly from far away
    def cost(x):
        return -(x[0] ** 4)

    def gh(x):
        return np.array([-4.0 * x[0] ** 3]), np.array([[-12.0 * x[0] ** 2]])

    out = newton_maximize(cost, gh, np.array([100.0]), NewtonOptions(max_iters=3))
    assert out.iterations == 3
    assert not out.converged
