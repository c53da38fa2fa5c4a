"""Timing comparison of the compiled kernels against the plain-numpy path.

The jit switch is read once at import, so each mode runs in a fresh
subprocess with TRIALEARN_DISABLE_NUMBA set accordingly.  Timings use
the best of `repeats` wall-clock measurements after one warmup call
(which also absorbs compilation in the jit mode).

Usage: python3 benchmarks/bench_kernels.py [--iterations N] [--repeats R]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
from importlib import resources

import numpy as np

import trialearn
from trialearn.accel import numba_enabled
from trialearn.learner import LearnerConfig, run
from trialearn.traffic import MeteringGains, load_demands, load_freeway, simulate_profile

iterations, repeats = json.loads(sys.argv[1])

data = resources.files("trialearn.data")
game = trialearn.load_game(str(data / "example1.json"))
cfg = LearnerConfig(
    epsilon_initial=0.1, epsilon_decay=0.99995, c=2.0, iterations=iterations, seed=1
)
spec = load_freeway(str(data / "freeway03.json"))
days = load_demands(str(data / "demands03.json"))
gains = MeteringGains()


def best_of(fn):
    fn()  # warmup; compiles under numba
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_learner():
    run(game, cfg)


def bench_ctm():
    for day in days:
        for p in range(8):
            profile = tuple((p >> (2 - j)) & 1 for j in range(3))
            simulate_profile(spec, day, profile, gains)


print(
    json.dumps(
        {
            "numba": numba_enabled(),
            "learner_s": best_of(bench_learner),
            "ctm_s": best_of(bench_ctm),
        }
    )
)
"""


def run_mode(disable: bool, iterations: int, repeats: int) -> dict:
    env = dict(os.environ)
    env["TRIALEARN_DISABLE_NUMBA"] = "1" if disable else "0"
    out = subprocess.run(
        [sys.executable, "-c", WORKER, json.dumps([iterations, repeats])],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iterations", type=int, default=200_000, help="learner run length")
    ap.add_argument("--repeats", type=int, default=3, help="timed repetitions per kernel")
    args = ap.parse_args()

    jit = run_mode(False, args.iterations, args.repeats)
    ref = run_mode(True, args.iterations, args.repeats)
    if jit["numba"] == ref["numba"]:
        print("warning: both modes report the same jit state;", jit["numba"])

    rows = [
        ("learner run, %dk iterations" % (args.iterations // 1000), "learner_s"),
        ("3-ramp tabulation, 16 runs", "ctm_s"),
    ]
    print(f"{'kernel':<34}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for label, key in rows:
        a, b = jit[key], ref[key]
        print(f"{label:<34}{a:>12.4f}{b:>12.4f}{b / a:>10.1f}x")


if __name__ == "__main__":
    main()
