"""Compare the compiled kernel backend against the numpy fallback.

Two parts:

* per-kernel micro-timings on protocol-sized batches (512 x 50), importing
  both kernel modules side by side;
* an end-to-end training loop timed once per backend, each in a fresh
  subprocess so the import-time backend switch (SSL_LAB_BACKEND) applies.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --steps 400 --repeats 2000
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, repeats):
    # one warm-up call, then best-of-3 wall time over `repeats` calls
    fn()
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, time.perf_counter() - t0)
    return best / repeats


def bench_kernels(batch, width, repeats):
    from ssl_lab import _kernels_py
    try:
        from ssl_lab import _kernels
    except ImportError:
        print("compiled extension not importable; micro-benchmarks skipped")
        return

    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.normal(size=(batch, width)))
    b = np.full(width, 0.5)
    gamma = np.ones(width)
    beta = np.zeros(width)
    dout = np.ascontiguousarray(rng.normal(size=(batch, width)))
    _, xhat, inv_std, _, _ = _kernels_py.batchnorm_train_forward(
        x, gamma, beta, 1e-5)

    cases = [
        ("relu_forward", lambda k: k.relu_forward(x)),
        ("relu_grad_mask", lambda k: k.relu_grad_mask(x)),
        ("srelu_forward", lambda k: k.srelu_forward(x, b)),
        ("srelu_grad_mask", lambda k: k.srelu_grad_mask(x, b)),
        ("row_norms", lambda k: k.row_norms(x)),
        ("batchnorm_train_forward",
         lambda k: k.batchnorm_train_forward(x, gamma, beta, 1e-5)),
        ("batchnorm_backward",
         lambda k: k.batchnorm_backward(dout, xhat, inv_std, gamma)),
    ]

    print(f"\nper-kernel timings, batch {batch} x {width}, "
          f"{repeats} calls (best of 3):")
    print(f"{'kernel':<26} {'python':>10} {'native':>10} {'speedup':>8}")
    for label, call in cases:
        t_py = _time(lambda: call(_kernels_py), repeats)
        t_c = _time(lambda: call(_kernels), repeats)
        print(f"{label:<26} {t_py * 1e6:>8.1f}us {t_c * 1e6:>8.1f}us "
              f"{t_py / t_c:>7.2f}x")


def run_e2e(steps):
    """Train a batch-norm + srelu encoder pair for `steps` SGD epochs."""
    from ssl_lab import backend
    from ssl_lab.losses import LossSpec
    from ssl_lab.trainer import (DataConfig, ModelConfig, TrainConfig,
                                 prepare_data, train)

    cfg = TrainConfig(loss=LossSpec("ncl_l2"), epochs=steps, seed=0)
    data = prepare_data(DataConfig(), 0)
    t0 = time.perf_counter()
    train(cfg, ModelConfig(), data)
    dt = time.perf_counter() - t0
    print(f"backend {backend.name:<7} {steps} epochs: {dt:.3f}s "
          f"({dt / steps * 1e3:.2f} ms/epoch)")


def bench_e2e(steps):
    print(f"\nend-to-end training loop ({steps} epochs, fresh process per "
          "backend):")
    here = os.path.abspath(__file__)
    for choice in ("native", "python"):
        env = dict(os.environ, SSL_LAB_BACKEND=choice)
        proc = subprocess.run(
            [sys.executable, here, "--e2e-only", "--steps", str(steps)],
            env=env, capture_output=True, text=True)
        out = proc.stdout.strip() or proc.stderr.strip()
        print(out if proc.returncode == 0
              else f"backend {choice}: failed ({out})")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=512)
    ap.add_argument("--width", type=int, default=50)
    ap.add_argument("--repeats", type=int, default=1000)
    ap.add_argument("--steps", type=int, default=200,
                    help="epochs for the end-to-end loop")
    ap.add_argument("--e2e-only", action="store_true",
                    help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.e2e_only:
        run_e2e(args.steps)
        return

    bench_kernels(args.batch, args.width, args.repeats)
    bench_e2e(args.steps)


if __name__ == "__main__":
    main()
