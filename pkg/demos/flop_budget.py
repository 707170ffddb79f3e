"""Cost model: closed-form per-evaluation flop counts and a real run.

The polynomials count real flops per cost (and cost-plus-derivatives)
evaluation under the convention that one complex multiply-add is eight
real flops.  Applying them to the iteration counts of an actual run
gives the per-run budget; at the benchmark's size the stochastic
pipeline lands in single-digit megaflops.
"""

import numpy as np

from apndoa import (
    CMULADD,
    apn_estimate,
    benchmark_scenario,
    eval_flops,
    flop_table,
    scale_for_snr,
    stream_rng,
    synthesize,
)

print(f"flop convention: 1 complex multiply-add = {CMULADD} real flops")
print()
print(f"{'m':>3} {'k':>2} {'cost_D':>8} {'cost_S':>8} {'D+derivs':>9} {'S+derivs':>9}")
for row in flop_table(11, range(1, 6)):
    print(
        f"{row['m']:>3} {row['k']:>2} {row['cost_d']:>8} {row['cost_s']:>8} "
        f"{row['cost_d_derivs']:>9} {row['cost_s_derivs']:>9}"
    )

config = benchmark_scenario()
lam = scale_for_snr(
    config.geometry, config.theta_true, config.source_model, config.noise_trend, 20.0
)
z = synthesize(
    config.geometry, config.theta_true, config.source_model, lam, 100, stream_rng(0, 2, 0)
)
res = apn_estimate(z, config.geometry, 3, target="sml")
print()
print(f"one stochastic run at 20 dB: {res.iters_stage1} line-search refinements,")
print(f"{res.iters_stage3} joint Newton iterations")
print(f"estimated work: {res.flop_estimate / 1e6:.2f} MFlops")
per_iter = eval_flops(11, 3, "S", derivatives=True)
print(f"(each joint iteration costs {per_iter} flops = {per_iter / 1e3:.1f} kFlops)")
