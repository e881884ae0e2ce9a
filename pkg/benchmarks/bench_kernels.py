"""Compare the compiled and pure-Python attention kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times ``attend_rows`` on a single streaming row, a revision window, and a
full fixture session on each available backend.
"""

import argparse
import timeit

import numpy as np

from streamrev import kernels
from streamrev.cli import fixture_config
from streamrev.config import load, to_session
from streamrev.harness import run_session


def kernel_case(rows, keys, d_model=32, heads=2, seed=0):
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((rows, d_model))
    K = rng.standard_normal((keys, d_model))
    V = rng.standard_normal((keys, d_model))
    hi = np.arange(keys - rows, keys, dtype=np.int64)
    lo = np.zeros(rows, dtype=np.int64)
    return lambda: kernels.attend_rows(Q, K, V, lo, hi, heads)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    session, _ = to_session(load(fixture_config()))
    cases = {
        "step (1 row, 120 keys)": kernel_case(1, 120),
        "revise (50 rows, 120 keys)": kernel_case(50, 120),
        "fixture session (120 frames)": lambda: run_session(session),
    }
    backends = ["python"]
    try:
        kernels.set_backend("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled extension not built; timing the fallback only")

    original = kernels.BACKEND
    results = {}
    for backend in backends:
        kernels.set_backend(backend)
        for name, fn in cases.items():
            number = 200 if name.startswith("step") else 20 if name.startswith("revise") else 1
            best = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
            results[name, backend] = best
    kernels.set_backend(original)

    print(f"{'case':32s}" + "".join(f"{b:>14s}" for b in backends) + ("   speedup" if len(backends) == 2 else ""))
    for name in cases:
        times = [results[name, b] for b in backends]
        line = f"{name:32s}" + "".join(f"{t * 1e3:12.3f}ms" for t in times)
        if len(times) == 2:
            line += f"   {times[1] / times[0]:6.1f}x"
        print(line)


if __name__ == "__main__":
    main()
