#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

The kernels module picks its backend at import time from the
``CFPOLICY_NO_NUMBA`` environment variable, so each backend is timed in a
fresh subprocess. Usage::

    python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import json
import subprocess
import sys

WORKER = r"""
import json
import time

import numpy as np

from cfpolicy.kernels import (USE_NUMBA, discounted_returns, fill_series,
                              rbf_mmd2_biased)

rng = np.random.default_rng(0)
x = rng.normal(size=(400, 4))
y = rng.normal(size=(400, 4)) + 0.3
series = rng.normal(size=5000)
series[rng.random(5000) < 0.4] = np.nan
rewards = rng.normal(size=200000)

cases = {
    "rbf_mmd2_biased(400x4 vs 400x4)": lambda: rbf_mmd2_biased(x, y, 1.0),
    "fill_series(5000, 40% missing)": lambda: fill_series(series, 0.0),
    "discounted_returns(200000)": lambda: discounted_returns(rewards, 0.99),
}

repeats = int(__import__("sys").argv[1])
out = {"backend": "numba" if USE_NUMBA else "numpy", "timings": {}}
for name, fn in cases.items():
    fn()  # warm-up (triggers JIT compilation on the numba side)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    out["timings"][name] = best
print(json.dumps(out))
"""


def run_backend(no_numba: bool, repeats: int) -> dict:
    import os

    env = dict(os.environ, CFPOLICY_NO_NUMBA="1" if no_numba else "0")
    proc = subprocess.run([sys.executable, "-c", WORKER, str(repeats)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repetitions per kernel (best is kept)")
    args = parser.parse_args()

    numba_res = run_backend(no_numba=False, repeats=args.repeats)
    numpy_res = run_backend(no_numba=True, repeats=args.repeats)
    if numba_res["backend"] != "numba":
        print("warning: numba unavailable; both runs used the numpy fallback")

    width = max(len(k) for k in numpy_res["timings"])
    print(f"{'kernel':<{width}}  {'numpy (s)':>12}  {'numba (s)':>12}  {'speedup':>8}")
    for name, t_np in numpy_res["timings"].items():
        t_nb = numba_res["timings"][name]
        print(f"{name:<{width}}  {t_np:>12.6f}  {t_nb:>12.6f}  {t_np / t_nb:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
