"""File formats: the snapshot container and the sweep CSV.

Snapshots persist in a 16-byte self-describing header plus row-major
complex64 payload; single-precision data round-trips bit for bit.  The
sweep CSV re-emits byte-identically after parsing, which is what the
regression workflow keys on.
"""

import io

import numpy as np

from apndoa import (
    benchmark_scenario,
    read_csv,
    read_snapshots,
    run_monte_carlo,
    write_csv,
    write_snapshots,
)

z = (np.arange(12).reshape(3, 4) + 1j * np.arange(12)[::-1].reshape(3, 4)).astype(
    np.complex64
)
buf = io.BytesIO()
write_snapshots(z, buf)
raw = buf.getvalue()
print(f"3 x 4 batch -> {len(raw)} bytes "
      f"(16-byte header + {z.size} complex64 cells)")
print(f"header bytes: {raw[:16].hex(' ')}")
back = read_snapshots(io.BytesIO(raw))
print(f"bit-exact round trip: {np.array_equal(back, z)}")

config = benchmark_scenario(trials=2, snr_db=(20.0,), estimators=("music", "dmlo"))
result = run_monte_carlo(config)
first = io.StringIO()
write_csv(result, first)
rows = read_csv(io.StringIO(first.getvalue()))
second = io.StringIO()
write_csv(rows, second)
print()
print(f"sweep CSV: {len(rows)} parsed rows")
print(f"write -> read -> write reproduces the bytes: "
      f"{first.getvalue() == second.getvalue()}")
