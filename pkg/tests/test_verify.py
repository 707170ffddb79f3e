"""Self-verification engine: the random-instance generator and the
check suites it runs."""

import numpy as np
import pytest

from apndoa import random_instance, run_verification, stream_rng


def test_random_instances_stay_in_bounds():
    rng = stream_rng(123)
    for _ in range(25):
        inst = random_instance(rng, m_max=12, k_max=4)
        m = inst.geometry.m
        assert inst.k <= 4 and m <= 12 and inst.k < m
        assert inst.theta.size == inst.k
        assert np.all(np.diff(np.sort(inst.theta)) > 0)
        assert inst.lam.shape == (m,) and (inst.lam > 0).all()
        assert inst.z.shape[0] == m and inst.z.shape[1] >= m


def test_instance_generation_is_deterministic():
    a = random_instance(stream_rng(5))
    b = random_instance(stream_rng(5))
    assert np.array_equal(a.z, b.z)
    assert np.array_equal(a.theta, b.theta)


def test_small_verification_run_is_clean():
    report = run_verification(instances=5, seed=2)
    assert report.ok
    assert report.instances == 5
    assert report.failures == []
    # every instance contributes a fixed bundle of derivative and
    # identity checks
    assert report.checks >= 5 * 12


def test_absurd_tolerances_produce_failures():
    report = run_verification(instances=2, seed=2, grad_rtol=1e-18, hess_rtol=1e-18)
    assert not report.ok
    assert len(report.failures) > 0
    assert all(isinstance(f, str) and f for f in report.failures)


def test_instance_count_is_validated():
    with pytest.raises(ValueError):
        run_verification(instances=0)
