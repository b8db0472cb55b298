"""Compiled vs numpy kernels, plus one full training step under each backend.

    python benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import importlib
import os
import subprocess
import sys
import timeit

import numpy as np

from ngt import _pykernels

STEP = """
import numpy as np
from ngt import harness
from ngt.config import make_settings
from ngt.optim import OptimState
from ngt.tasks import batch_iter
exp, data = harness.prepare(make_settings({"n_train": 64, "n_val": 8}))
params = harness.initial_params(exp, 0)
batch = next(batch_iter(data.train, 8, 0, 0))
rng = np.random.default_rng(0)
"""


def kernel_cases(rng):
    x = rng.normal(size=(8, 4, 32, 32))
    h = rng.normal(size=(8, 32, 1024))
    gamma, beta = np.ones(1024), np.zeros(1024)
    y = _pykernels.softmax_rows(x)
    _, xhat, rstd = _pykernels.layer_norm_rows(h, gamma, beta, 1e-12)
    return {
        "softmax_rows": lambda k: k.softmax_rows(x),
        "softmax_rows_backward": lambda k: k.softmax_rows_backward(y, x),
        "layer_norm_rows": lambda k: k.layer_norm_rows(h, gamma, beta, 1e-12),
        "layer_norm_rows_backward": lambda k: k.layer_norm_rows_backward(h, xhat, rstd, gamma),
        "gelu": lambda k: k.gelu(h),
        "gelu_backward": lambda k: k.gelu_backward(h, h),
    }


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def training_step(backend, repeat):
    env = dict(os.environ, NGT_KERNELS=backend)
    code = (STEP + "import timeit\n"
            f"print(min(timeit.repeat(lambda: harness.train_step(params, OptimState(), exp, batch, rng),"
            f" number=1, repeat={repeat})))")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    return float(out.stdout.strip())


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    try:
        compiled = importlib.import_module("ngt._ckernels")
    except ImportError:
        sys.exit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    print(f"{'kernel':28s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in kernel_cases(np.random.default_rng(0)).items():
        slow = best_of(lambda: fn(_pykernels), args.repeat) * 1e3
        fast = best_of(lambda: fn(compiled), args.repeat) * 1e3
        print(f"{name:28s} {slow:10.3f} {fast:10.3f} {slow / fast:7.2f}x")
    slow = training_step("python", args.repeat) * 1e3
    fast = training_step("cython", args.repeat) * 1e3
    print(f"{'train_step (toy, batch 8)':28s} {slow:10.3f} {fast:10.3f} {slow / fast:7.2f}x")


if __name__ == "__main__":
    main()
