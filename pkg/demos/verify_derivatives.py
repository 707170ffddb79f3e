"""Check the closed-form derivatives against finite differences.

The package carries its own verification engine: random array
geometries, random evaluation points, central-difference gradients and
Hessians of both concentrated costs, plus the projector and trace
identities the factorizations promise.  This is the same machinery as
`apndoa verify`, driven from Python.
"""

import numpy as np

from apndoa import (
    build_workspace,
    cost_sml,
    fd_check,
    gradient,
    random_instance,
    run_verification,
    sample_covariance,
    steering_set,
    stream_rng,
)

report = run_verification(instances=20, seed=1)
print(f"instances {report.instances}, checks {report.checks}, "
      f"failures {len(report.failures)}")

# one instance by hand, to show the raw comparison
inst = random_instance(stream_rng(3))
rz = sample_covariance(inst.z)
k = inst.k


def cost_at(x):
    return cost_sml(build_workspace(rz, steering_set(inst.geometry, x[:k]), x[k:]))


x = np.concatenate([inst.theta, inst.lam])
ws = build_workspace(rz, steering_set(inst.geometry, inst.theta), inst.lam)
result = fd_check(cost_at, x, grad=gradient(ws, "S"))
print()
print(f"hand-checked instance: {inst.geometry.m} sensors, k = {k}")
print(f"stochastic gradient, blockwise relative error vs central differences: "
      f"{result.grad_block_err:.2e}")
