"""Time the hot kernels with numba and with the pure-Python fallback.

Each backend runs in its own interpreter because the choice is fixed at
import time. Usage::

    python benchmarks/bench_kernels.py [--span 20] [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, math, sys, time
import numpy as np
from bohmtraj import _accel, _kernels
from bohmtraj.wavefunction import Superposition
from bohmtraj.dynamics import TrajectorySpec, integrate
from bohmtraj.integrability import AxisTerm

span, repeat = float(sys.argv[1]), int(sys.argv[2])
psi = Superposition.from_quanta((1.0, math.sqrt(2), math.sqrt(3)),
                                [(1, 0, 0), (0, 1, 0), (0, 0, 2)])
field = psi.kernel_field()
pts = np.random.default_rng(0).uniform(-1.5, 1.5, (2000, 3))
out = np.zeros(3)
term = AxisTerm.pair(1, 3, math.sqrt(2), 1.0)
xs = np.linspace(0.05, 2.5, 200)
spec = TrajectorySpec(psi, (0.6403124237, 0.3, 1.0), t0=1.0, t_end=1.0 + span)


def velocity():
    for p in pts:
        _kernels.velocity_field(p, 1.3, 1, field, out)


def trajectory():
    return integrate(spec).accepted


def quadrature():
    term.antiderivative(xs)


res = {"backend": _accel.backend()}
for name, fn in (("velocity x2000", velocity), ("integrate", trajectory),
                 ("quadrature x200", quadrature)):
    t0 = time.perf_counter()
    fn()
    first = time.perf_counter() - t0
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    res[name] = {"first": first, "best": best}
res["steps"] = trajectory()
print(json.dumps(res))
"""


def run(flag, span, repeat):
    env = dict(os.environ, BOHMTRAJ_NUMBA=flag)
    proc = subprocess.run([sys.executable, "-c", WORKER, str(span), str(repeat)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--span", type=float, default=20.0, help="trajectory length")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    fast = run("1", args.span, args.repeat)
    slow = run("0", args.span, args.repeat)
    print(f"trajectory span {args.span}, {fast['steps']} accepted steps")
    print(f"{'kernel':<18}{'numba first':>13}{'numba best':>13}{'python best':>13}{'speedup':>10}")
    for key in ("velocity x2000", "integrate", "quadrature x200"):
        f, s = fast[key], slow[key]
        print(f"{key:<18}{f['first']:>12.4f}s{f['best']:>12.4f}s{s['best']:>12.4f}s"
              f"{s['best'] / f['best']:>9.1f}x")


if __name__ == "__main__":
    main()
