#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback path.

The fallback is selected by ISCCSIM_DISABLE_NUMBA=1; this script runs the
same workloads in both modes (the fallback in a subprocess) and prints a
side-by-side table.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKLOADS = ("rate_quadforms", "barrier", "beamforming_solve")


def run_workloads(repeat):
    import numpy as np

    from isccsim._kernels import USE_NUMBA, barrier_maximize, rate_quadforms
    from isccsim.beamform_fp import FpOptions, beamforming_solve
    from isccsim.metrics import ExecutionMode, Mode
    from isccsim.scenario import SystemConfig, build_scenario

    rng = np.random.default_rng(0)
    cfg = SystemConfig()
    scenario = build_scenario(cfg, seed=0)
    modes = [ExecutionMode(Mode.MEC, scenario.nearest_bs(k)) for k in range(cfg.K)]

    g = np.ascontiguousarray(
        rng.standard_normal((cfg.L, cfg.K, cfg.M))
        + 1j * rng.standard_normal((cfg.L, cfg.K, cfg.M))) * 1e-6

    n = 2 * cfg.N
    A = rng.standard_normal((n, n))
    Q = A @ A.T / n
    t = rng.standard_normal(n) * 0.1
    S = np.stack([np.eye(n) * 0.5 for _ in range(cfg.K - 1)])
    caps = np.full(cfg.K - 1, 2.0)
    c_lin = rng.standard_normal(n)
    c_lin /= np.linalg.norm(c_lin)
    v0 = np.zeros(n)
    v0[0] = 0.2  # strictly feasible for tau = 0.1
    out = {}

    # warm-up (includes JIT compilation when enabled)
    rate_quadforms(g, cfg.sigma_b2())
    barrier_maximize(Q, t, S, caps, c_lin, 0.1, True, 1.0, v0, 1e-9, 60)

    t0 = time.perf_counter()
    for _ in range(repeat * 50):
        rate_quadforms(g, cfg.sigma_b2())
    out["rate_quadforms"] = (time.perf_counter() - t0) / (repeat * 50)

    t0 = time.perf_counter()
    for _ in range(repeat * 20):
        barrier_maximize(Q, t, S, caps, c_lin, 0.1, True, 1.0, v0, 1e-9, 60)
    out["barrier"] = (time.perf_counter() - t0) / (repeat * 20)

    t0 = time.perf_counter()
    for _ in range(repeat):
        beamforming_solve(scenario, modes, FpOptions())
    out["beamforming_solve"] = (time.perf_counter() - t0) / repeat

    out["numba"] = USE_NUMBA
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--emit-json", action="store_true",
                    help="print raw timings as JSON (used by the subprocess)")
    args = ap.parse_args()

    if args.emit_json:
        print(json.dumps(run_workloads(args.repeat)))
        return

    jit = run_workloads(args.repeat)
    if not jit["numba"]:
        print("warning: numba path unavailable; timing fallback only")

    env = dict(os.environ, ISCCSIM_DISABLE_NUMBA="1")
    proc = subprocess.run(
        [sys.executable, os.path.abspath(__file__),
         "--repeat", str(max(1, args.repeat // 3)), "--emit-json"],
        env=env, capture_output=True, text=True, check=True)
    fallback = json.loads(proc.stdout)

    print(f"{'workload':<22}{'numba (s)':>14}{'fallback (s)':>14}{'speedup':>10}")
    for name in WORKLOADS:
        sp = fallback[name] / jit[name] if jit[name] > 0 else float("inf")
        print(f"{name:<22}{jit[name]:>14.6f}{fallback[name]:>14.6f}{sp:>9.1f}x")


if __name__ == "__main__":
    main()
