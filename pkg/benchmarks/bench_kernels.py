"""Compare the compiled and pure-numpy kernel backends.

Run without arguments to benchmark both backends (the script re-invokes
itself in a subprocess with DMAE_DISABLE_NUMBA=1 for the fallback) and print
a comparison table:

    python3 benchmarks/bench_kernels.py

With --worker it times only the backend active in the current process and
emits machine-readable ``name=seconds`` lines.
"""

import argparse
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

REPO_ROOT = Path(__file__).resolve().parents[1]
CONFIG = REPO_ROOT / "configs" / "example1.cfg"

CASES = [
    ("kf_predict (dim 6)", "kf_predict"),
    ("kf_update (dim 6, m 2)", "kf_update"),
    ("dryden channel (100k steps)", "dryden"),
    ("run_dmae (500-step scenario)", "run_dmae"),
]


def _time_call(func, reps, inner=1):
    func()  # warm-up (triggers compilation on the numba backend)
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        for _ in range(inner):
            func()
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def run_worker():
    from dmae import accel, run_dmae
    from dmae.kernels import dryden_channel_kernel, kf_predict_kernel, kf_update_kernel
    from dmae.scenario import load_config

    rng = np.random.default_rng(0)
    dim, m = 6, 2
    mean = rng.standard_normal(dim)
    a = rng.standard_normal((dim, dim))
    cov = a @ a.T + dim * np.eye(dim)
    Abar = np.eye(dim) + 0.01 * rng.standard_normal((dim, dim))
    Qbar = 1e-4 * np.eye(dim)
    bu = rng.standard_normal(dim)
    Hbar = rng.standard_normal((m, dim))
    R = 1e-4 * np.eye(m)
    y = rng.standard_normal(m)
    W = rng.standard_normal(100_000)
    cfg = load_config(CONFIG)

    timings = {
        "kf_predict": _time_call(lambda: kf_predict_kernel(mean, cov, Abar, Qbar, bu), reps=20, inner=200),
        "kf_update": _time_call(lambda: kf_update_kernel(mean, cov, y, Hbar, R), reps=20, inner=200),
        "dryden": _time_call(lambda: dryden_channel_kernel(35.0, 2500.0, 0.5, W), reps=10),
        "run_dmae": _time_call(lambda: run_dmae(cfg), reps=5),
    }
    print(f"backend={accel.BACKEND}")
    for key, value in timings.items():
        print(f"{key}={value:.6e}")


def _collect(env_extra):
    env = dict(os.environ)
    env.update(env_extra)
    out = subprocess.run(
        [sys.executable, str(Path(__file__).resolve()), "--worker"],
        capture_output=True, text=True, env=env, check=True,
    ).stdout
    parsed = dict(line.split("=", 1) for line in out.strip().splitlines())
    backend = parsed.pop("backend")
    return backend, {k: float(v) for k, v in parsed.items()}


def _fmt_seconds(s):
    if s < 1e-3:
        return f"{s * 1e6:8.1f} us"
    if s < 1.0:
        return f"{s * 1e3:8.2f} ms"
    return f"{s:8.2f} s "


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--worker", action="store_true", help="time the active backend only")
    args = parser.parse_args(argv)
    if args.worker:
        run_worker()
        return 0

    fast_backend, fast = _collect({})
    slow_backend, slow = _collect({"DMAE_DISABLE_NUMBA": "1"})
    if fast_backend == slow_backend:
        print(f"only the {fast_backend} backend is available; no comparison to make")
        fmt_rows = [(label, fast[key], None) for label, key in CASES]
    else:
        fmt_rows = [(label, fast[key], slow[key]) for label, key in CASES]

    width = max(len(label) for label, _ in CASES)
    print(f"{'kernel':<{width}}  {fast_backend:>11}  {slow_backend:>11}  speedup")
    for label, f, s in fmt_rows:
        if s is None:
            print(f"{label:<{width}}  {_fmt_seconds(f)}")
        else:
            print(f"{label:<{width}}  {_fmt_seconds(f)}  {_fmt_seconds(s)}  {s / f:6.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
