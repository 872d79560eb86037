"""Compiled kernels against the numpy fallback.

Kernel timings call both modules directly in this process. The end-to-end
timings rerun a small training job in a child process with and without
QAMINE_PURE_PYTHON so the backend choice goes through normal import.

    python benchmarks/bench_kernels.py [--repeat 5] [--skip-e2e]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from qamine import _kernels_py

try:
    from qamine import _kernels as _compiled
except ImportError:  # pragma: no cover
    _compiled = None


def split_case(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.random(n))
    w = np.ones(n)
    p = (rng.random(n) < 0.4).astype(np.float64)
    g = rng.normal(size=n)
    return x, w, p, g


def sgd_case(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    dim = 1 << 18
    lens = rng.integers(2, 20, n)
    indptr = np.r_[0, np.cumsum(lens)].astype(np.int64)
    indices = rng.integers(0, dim, indptr[-1]).astype(np.int32)
    values = np.ones(indptr[-1])
    scalars = np.ascontiguousarray(rng.random((n, 4)))
    targets = (rng.random(n) < 0.5).astype(np.float64)
    order = rng.permutation(n).astype(np.int64)
    return (indptr, indices, values, scalars, targets, order), dim


def time_kernels(repeat: int) -> list[tuple[str, float, float]]:
    rows = []
    x, w, p, g = split_case(20_000)
    for name, args in (("best_split_gini n=20k", (x, w, p, 20.0)), ("best_split_sse n=20k", (x, w, g, 20.0))):
        fn = name.split()[0]
        t_c = min(timeit.repeat(lambda: getattr(_compiled, fn)(*args), number=20, repeat=repeat)) / 20
        t_p = min(timeit.repeat(lambda: getattr(_kernels_py, fn)(*args), number=20, repeat=repeat)) / 20
        rows.append((name, t_c, t_p))

    data, dim = sgd_case(20_000)

    def epoch(mod):
        w_, v_, b_ = np.zeros(dim), np.zeros(4), np.zeros(1)
        mod.sgd_epoch(*data, 32, 0.1, 1e-6, 0, w_, v_, b_, np.zeros(32))

    t_c = min(timeit.repeat(lambda: epoch(_compiled), number=1, repeat=repeat))
    t_p = min(timeit.repeat(lambda: epoch(_kernels_py), number=1, repeat=max(1, repeat // 2)))
    rows.append(("sgd_epoch n=20k batch=32", t_c, t_p))
    return rows


E2E = """
import time
import numpy as np
from dataclasses import replace
from qamine import qa, kernels
from qamine.feedback import train_gbdt
from qamine.simulator import SimConfig, gen_pairs, gen_gold_labels

rng = np.random.default_rng(0)
X = rng.random((5000, 14))
y = X[:, 3] - X[:, 7] + rng.normal(0, 0.3, 5000) > 0
t0 = time.perf_counter()
train_gbdt(X, y, n_trees=50)
t1 = time.perf_counter()
cfg = SimConfig(n_pairs=3000)
sp = gen_pairs(cfg)
pairs = qa.with_labels([s.pair for s in sp], [g for _, g in gen_gold_labels(sp, cfg)])
t2 = time.perf_counter()
qa.train(qa.RelevanceModel(), pairs, qa.TrainConfig(epochs=3))
t3 = time.perf_counter()
print(kernels.BACKEND, t1 - t0, t3 - t2)
"""


def time_end_to_end() -> dict[str, tuple[float, float]]:
    out = {}
    for pure in ("0", "1"):
        env = dict(os.environ, QAMINE_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        backend, gbdt, sgd = res.stdout.split()
        out[backend] = (float(gbdt), float(sgd))
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; run `python setup.py build_ext --inplace`", file=sys.stderr)
        return 1

    print(f"{'kernel':<28}{'cython':>12}{'numpy':>12}{'speedup':>10}")
    for name, t_c, t_p in time_kernels(args.repeat):
        print(f"{name:<28}{t_c * 1e3:>10.3f}ms{t_p * 1e3:>10.3f}ms{t_p / t_c:>9.1f}x")

    if not args.skip_e2e:
        e2e = time_end_to_end()
        c, p = e2e["cython"], e2e["python"]
        print()
        print(f"{'job':<28}{'cython':>12}{'numpy':>12}{'speedup':>10}")
        print(f"{'gbdt 50 trees, 5k rows':<28}{c[0]:>11.2f}s{p[0]:>11.2f}s{p[0] / c[0]:>9.1f}x")
        print(f"{'qa sgd 3 epochs, 3k pairs':<28}{c[1]:>11.2f}s{p[1]:>11.2f}s{p[1] / c[1]:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
