"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

End-to-end numbers (perturbation training, NI) are measured in fresh
subprocesses so each one runs with a single backend selected at import.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from tokenuap import _kernels_py

try:
    from tokenuap import _kernels
except ImportError:
    _kernels = None


def batch(rng, vocab, n, max_len):
    lengths = rng.integers(5, max_len + 1, size=n)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    ids = rng.integers(2, vocab, size=offsets[-1]).astype(np.int64)
    return ids, offsets


def kernel_cases(rng):
    table = rng.normal(size=(5000, 64))
    ids, offsets = batch(rng, 5000, 256, 40)
    delta = rng.normal(size=64)
    grad = rng.normal(size=(256, 64))
    scores = rng.normal(size=(1024, 5000))
    exclude = np.arange(1024, dtype=np.int64)
    return {
        "pool_mean (256x~22 tokens, d=64)": lambda m: m.pool_mean(table, ids, offsets, delta, 1),
        "scatter_mean (256 rows, d=64)": lambda m: m.scatter_mean(grad, ids, offsets, np.zeros_like(table)),
        "topk_rows (1024x5000, k=5)": lambda m: m.topk_rows(scores, 5, exclude),
    }


E2E = """
import time, numpy as np
from tokenuap import kernels
from tokenuap.classifier import ClassifierParams
from tokenuap.metrics import ni_vocab
from tokenuap.perturbation import PerturbTrainConfig, train_perturbation
from tokenuap.text_data import LabeledExample
rng = np.random.default_rng(0)
params = ClassifierParams.init(3000, 32, 32, 2, seed=0)
data = [LabeledExample(rng.integers(2, 3000, size=int(rng.integers(5, 30))), int(rng.integers(2)))
        for _ in range(2000)]
t = time.perf_counter()
train_perturbation(params, data, data[:200], PerturbTrainConfig(epochs=3))
a = time.perf_counter() - t
t = time.perf_counter()
ni_vocab(params.embeddings, rng.normal(0, 0.05, 32), 5, {0, 1})
b = time.perf_counter() - t
print(kernels.BACKEND, a, b)
"""


def end_to_end(pure):
    env = dict(os.environ, TOKENUAP_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
    name, train, ni = out.stdout.split()
    return name, float(train), float(ni)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = [("python", _kernels_py)] + ([("cython", _kernels)] if _kernels is not None else [])
    if _kernels is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':<36}" + "".join(f"{n:>12}" for n, _ in backends) + ("   speedup" if _kernels else ""))
    for label, fn in kernel_cases(rng).items():
        times = [min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) for _, mod in backends]
        row = f"{label:<36}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"   {times[0] / times[1]:6.1f}x"
        print(row)
    print()
    for pure in ([True, False] if _kernels is not None else [True]):
        name, train, ni = end_to_end(pure)
        print(f"{name:<8} perturbation training (3 epochs, 2000 ex) {train:7.2f}s   NI(V) |V|=3000 {ni:6.2f}s")


if __name__ == "__main__":
    main()
