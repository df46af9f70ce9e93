#!/usr/bin/env python3
"""Compare the numba kernels against their numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--no-trial]

Kernel timings run in-process (the numba variants are compiled once before
timing).  The end-to-end trial timing runs one depth-camera push in two
subprocesses, with and without PUSHSUB_NO_NUMBA=1.
"""
import argparse
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from pushsub import kernels


def lidar_case(rng):
    az = np.linspace(-np.pi / 4, np.pi / 4, 128)
    dirs = np.column_stack([np.cos(az), np.sin(az)])
    a = rng.uniform(0.3, 1.0, (4, 2))
    b = np.roll(a, -1, axis=0)
    return np.zeros(2), dirs, a, b, np.zeros((0, 3))


def depth_case(rng):
    n = 160 * 120
    dirs = np.column_stack([rng.uniform(-0.2, 1.2, n), rng.uniform(-0.6, 0.6, n), rng.uniform(-1.2, -0.2, n)])
    th = 0.3
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    poly = np.array([[-0.2, -0.2], [0.2, -0.2], [0.2, 0.2], [-0.2, 0.2]]) @ R.T + [0.6, 0.0]
    return np.array([0.1, 0.0, 1.1]), dirs, poly, 0.8, np.zeros(3)


def grid_case(rng):
    n = 5000
    return (rng.uniform(0.3, 0.62, n), rng.uniform(-0.3, 0.3, n), 0.3 + 0.02 * np.arange(17),
            -0.3 + 0.05 * np.arange(13), 0.62)


def bench(fn, args, repeat):
    fn(*args)  # compile / warm caches
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def trial_time(no_numba: bool) -> float:
    code = ("import time\n"
            "from pushsub.config import WorkbenchConfig\n"
            "from pushsub.pipeline.trial import GroundTruthEstimator, TrialConfig, run_trial\n"
            "wb = WorkbenchConfig()\n"
            "run_trial(TrialConfig('box', 'S_mu1', (0.6, 0.0), 'lidar', t_max=1.0), wb, GroundTruthEstimator())\n"
            "t0 = time.perf_counter()\n"
            "log = run_trial(TrialConfig('box', 'S_mu1', (2.0, 0.0), 'depth', seed=1), wb, GroundTruthEstimator())\n"
            "print(time.perf_counter() - t0, len(log.ticks))\n")
    env = dict(os.environ, PUSHSUB_NO_NUMBA="1" if no_numba else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    secs, ticks = out.stdout.split()
    return float(secs), int(ticks)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--no-trial", action="store_true", help="skip the end-to-end trial timing")
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        sys.exit("numba is unavailable (or PUSHSUB_NO_NUMBA is set); nothing to compare")

    rng = np.random.default_rng(0)
    cases = [
        ("ray_cast_2d (128 beams)", kernels.ray_cast_2d_numpy, kernels.ray_cast_2d_loop, lidar_case(rng)),
        ("prism_cast (160x120 px)", kernels.prism_cast_numpy, kernels.prism_cast_loop, depth_case(rng)),
        ("grid_proximity (5000 pts)", kernels.grid_proximity_numpy, kernels.grid_proximity_loop, grid_case(rng)),
    ]
    print(f"{'kernel':28s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, np_fn, nb_fn, case in cases:
        t_np = bench(np_fn, case, args.repeat)
        t_nb = bench(nb_fn, case, args.repeat)
        print(f"{name:28s} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:8.2f}")

    if not args.no_trial:
        t0 = time.perf_counter()
        s_nb, n = trial_time(False)
        s_np, _ = trial_time(True)
        print(f"\ndepth-sensed box push, {n} ticks: numba {s_nb:.2f} s, numpy {s_np:.2f} s, "
              f"speedup {s_np / s_nb:.2f} (wall {time.perf_counter() - t0:.1f} s incl. startup)")


if __name__ == "__main__":
    main()
