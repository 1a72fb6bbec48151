"""Time the numba kernels against the numpy fallback.

Each backend runs in its own interpreter because the switch is read at import
time::

    python benchmarks/bench_kernels.py            # both backends, n = 468001
    python benchmarks/bench_kernels.py --n 23401 --repeat 20
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

WORKER = r"""
import json, sys, timeit
import numpy as np
from hfnoise import kernels
from hfnoise._accel import backend
from hfnoise.sim import Ar1NoiseConfig, OuConfig, simulate_observed
from hfnoise.multistep import Tuning, run_pipeline

n, repeat = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
y = np.cumsum(rng.standard_normal(n)) * 1e-4
z = rng.standard_normal(n)
lags = np.arange(1, 31)
k = int(0.2 * np.sqrt(n - 1))
m = (n - 1) // (2 * k)
cases = {
    "lag_sq_sums(30 lags)": lambda: kernels.lag_sq_sums(y, lags),
    "block_preaverages": lambda: kernels.block_preaverages(y, k, m, k + 1),
    "ar1_recursion": lambda: kernels.ar1_recursion(z, -0.7, 0.0),
    "sv_euler": lambda: kernels.sv_euler(z[:-1], z[1:], 1.0 / n, 1.6, 0.5, 1.6, 0.02, 1.6e-4, 2e-4, -0.5, 1.6e-4),
    "full path + pipeline": lambda: run_pipeline(
        simulate_observed(OuConfig(), Ar1NoiseConfig(), n, 1.0, 1).series, Tuning(n_steps=3)),
}
out = {"backend": backend()}
for name, fn in cases.items():
    fn()  # compile / warm caches
    out[name] = min(timeit.repeat(fn, number=1, repeat=repeat))
print(json.dumps(out))
"""


def run(n, repeat, disable):
    env = dict(os.environ)
    env["HFNOISE_DISABLE_NUMBA"] = "1" if disable else "0"
    res = subprocess.run([sys.executable, "-c", WORKER, str(n), str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--n", type=int, default=468001)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    fast = run(args.n, args.repeat, disable=False)
    slow = run(args.n, args.repeat, disable=True)
    print(f"n = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<24} {fast['backend']:>12} {slow['backend']:>12} {'speedup':>8}")
    for name in fast:
        if name == "backend":
            continue
        a, b = fast[name], slow[name]
        print(f"{name:<24} {a * 1e3:10.2f}ms {b * 1e3:10.2f}ms {b / a:7.1f}x")


if __name__ == "__main__":
    main()
