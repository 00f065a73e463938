#!/usr/bin/env python3
"""Benchmark the compiled kernel extension against the numpy fallback.

Times every kernel primitive on shapes representative of the real workload
(batch 256, spliced 1320-dim input, 64-wide hidden layers), checks that the
two backends agree numerically, and measures one end-to-end composite
forward/backward step per backend in separate subprocesses (backend choice
is fixed at import time, so a fresh interpreter is the honest way to
compare full-stack throughput).

Usage: python benchmarks/bench_kernels.py [--repeats N] [--skip-e2e]
"""

import argparse
import json
import subprocess
import sys
import timeit

import numpy as np

from invnet import _kernels_np
from invnet.backend import active_backend

try:
    from invnet import _kernels
except ImportError:
    _kernels = None


def _make_cases(rng):
    """(name, kernel attr, args) for every primitive at workload shapes."""
    x_in = rng.normal(size=(256, 1320))
    w_in = rng.normal(size=(64, 1320)) * 0.03
    b = rng.normal(size=64)
    x_h = rng.normal(size=(256, 64))
    w_h = rng.normal(size=(64, 64)) * 0.1
    g_h = rng.normal(size=(256, 64))
    logits = rng.normal(size=(256, 32))
    z1 = rng.normal(size=(256, 1))
    return [
        ("affine_forward 256x1320->64", "affine_forward", (x_in, w_in, b)),
        ("affine_forward 256x64->64", "affine_forward", (x_h, w_h, b)),
        ("affine_backward 256x1320->64", "affine_backward", (g_h, x_in, w_in)),
        ("affine_backward 256x64->64", "affine_backward", (g_h, x_h, w_h)),
        ("relu 256x64", "relu", (x_h,)),
        ("relu_backward 256x64", "relu_backward", (g_h, x_h)),
        ("softmax_rows 256x32", "softmax_rows", (logits,)),
        ("sigmoid 256x1", "sigmoid", (z1,)),
        ("sigmoid 256x64", "sigmoid", (x_h,)),
    ]


def _best_seconds(fn, args, repeats):
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeats, number=number)) / number


def _max_abs_diff(a, b):
    if isinstance(a, tuple):
        return max(_max_abs_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) if np.size(a) else 0.0


E2E_SNIPPET = """
import json, time
import numpy as np
from invnet import model
from invnet.backend import active_backend
cfg = model.default_net_config(1320, 32)
params = model.init_params(cfg, 0)
rng = np.random.default_rng(1)
x = rng.normal(size=(256, 1320))
labels = model.BatchLabels(y=rng.integers(0, 32, size=256),
                           d=np.repeat([0, 1], 128))
for _ in range(3):
    model.composite_backward(model.forward(params, x), labels, 1.0, 0.5)
n = 30
t0 = time.perf_counter()
for _ in range(n):
    model.composite_backward(model.forward(params, x), labels, 1.0, 0.5)
print(json.dumps({"backend": active_backend(),
                  "steps_per_s": n / (time.perf_counter() - t0)}))
"""


def _end_to_end(backend):
    import os

    env = dict(os.environ, INVNET_KERNELS=backend)
    proc = subprocess.run([sys.executable, "-c", E2E_SNIPPET], env=env,
                          capture_output=True, text=True, timeout=300)
    if proc.returncode != 0:
        raise RuntimeError(f"{backend} end-to-end run failed:\n{proc.stderr}")
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repetitions per kernel (default 5)")
    parser.add_argument("--skip-e2e", action="store_true",
                        help="skip the subprocess end-to-end comparison")
    args = parser.parse_args(argv)

    if _kernels is None:
        print("compiled extension not built; micro table shows numpy only")
    print(f"active backend in this process: {active_backend()}")
    rng = np.random.default_rng(7)
    cases = _make_cases(rng)

    name_w = max(len(name) for name, _, _ in cases)
    print(f"\n{'kernel and shape':<{name_w}}  {'compiled':>10}  "
          f"{'numpy':>10}  {'speedup':>8}  {'max |diff|':>10}")
    for name, attr, call_args in cases:
        np_fn = getattr(_kernels_np, attr)
        np_s = _best_seconds(np_fn, call_args, args.repeats)
        if _kernels is not None:
            ext_fn = getattr(_kernels, attr)
            ext_s = _best_seconds(ext_fn, call_args, args.repeats)
            diff = _max_abs_diff(ext_fn(*call_args), np_fn(*call_args))
            print(f"{name:<{name_w}}  {1e6 * ext_s:>8.1f}us  "
                  f"{1e6 * np_s:>8.1f}us  {np_s / ext_s:>7.2f}x  "
                  f"{diff:>10.2e}")
        else:
            print(f"{name:<{name_w}}  {'--':>10}  {1e6 * np_s:>8.1f}us")

    if not args.skip_e2e:
        print("\nend-to-end composite forward+backward "
              "(batch 256, default network):")
        backends = ["python"] + (["compiled"] if _kernels is not None else [])
        for backend in backends:
            res = _end_to_end(backend)
            print(f"  {res['backend']:>8}: {res['steps_per_s']:7.1f} steps/s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
