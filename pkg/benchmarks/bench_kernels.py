"""Time the hot kernels with numba and with the pure-numpy fallback.

Each backend runs in its own interpreter because PACC_DISABLE_NUMBA is read
at import time. Compilation is excluded by a warm-up call.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--sims 256 1024]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = "--worker"


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def worker(repeat, sims):
    import numpy as np

    from pacc._accel import USE_NUMBA
    from pacc.data import DriverProfile, demonstrations, synthesize_driver
    from pacc.irl import QAveraging
    from pacc.model import PaccModel
    from pacc.solver import Belief, PlannerConfig, plan

    w = -np.ones(25)
    w[11], w[12] = 1.0, 0.5
    model = PaccModel(w)
    belief = Belief.uniform(model.initial_state(), 500)
    out = {"numba": USE_NUMBA}
    for n in sims:
        cfg = PlannerConfig(n_simulations=n, time_budget=1e9)
        out[f"plan_{n}"] = best_of(lambda: plan(belief, cfg, model, seed=0), repeat)
    out["synthesize_20_events"] = best_of(lambda: synthesize_driver(DriverProfile(11), 20, seed=0), repeat)
    demos = demonstrations(synthesize_driver(DriverProfile(11), 60, seed=1))
    out["q_averaging_60_events"] = best_of(lambda: QAveraging(demos, 0.9), repeat)
    print(json.dumps(out))


def run_backend(disable, repeat, sims):
    env = dict(os.environ)
    env.pop("PACC_DISABLE_NUMBA", None)
    if disable:
        env["PACC_DISABLE_NUMBA"] = "1"
    cmd = [sys.executable, __file__, WORKER, "--repeat", str(repeat), "--sims", *map(str, sims)]
    res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--sims", type=int, nargs="+", default=[256, 1024])
    parser.add_argument(WORKER, action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.worker:
        worker(args.repeat, args.sims)
        return
    fast = run_backend(False, args.repeat, args.sims)
    slow = run_backend(True, args.repeat, args.sims)
    print(f"{'kernel':<24}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for key in fast:
        if key == "numba":
            continue
        print(f"{key:<24}{fast[key]:>12.4f}{slow[key]:>12.4f}{slow[key] / fast[key]:>9.1f}x")


if __name__ == "__main__":
    main()
