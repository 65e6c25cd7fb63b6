"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--qubits 4 8 12 16] [--repeat 5]

Prints one row per (kernel, qubit count) with the best-of-``repeat`` time of
each backend and the speedup. Small registers are where the package spends
its time, so per-call overhead matters as much as raw throughput.
"""
import argparse
import sys
import timeit

import numpy as np

from qfubqc import _pykernels

try:
    from qfubqc import _ckernels
except ImportError:
    _ckernels = None

H = np.ascontiguousarray(np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2))
BRA = np.array([1, 1], dtype=complex) / np.sqrt(2)


def cases(n, rng):
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    psi /= np.linalg.norm(psi)
    rows = rng.integers(1, 1 << n, size=n, dtype=np.uint64)
    q, t = n // 2, n - 1
    return {
        "apply_1q": lambda k: k.apply_1q(psi.copy(), n, q, H),
        "apply_cz": lambda k: k.apply_cz(psi.copy(), n, q, t),
        "apply_cnot": lambda k: k.apply_cnot(psi.copy(), n, q, t),
        "apply_phase": lambda k: k.apply_phase(psi.copy(), n, q, 1j),
        "contract": lambda k: k.contract(psi, n, q, BRA),
        "parity_table": lambda k: k.parity_table(rows, n),
    }


def best(fn, kernels, repeat):
    loops, _ = timeit.Timer(lambda: fn(kernels)).autorange()
    return min(timeit.repeat(lambda: fn(kernels), number=loops, repeat=repeat)) / loops


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--qubits", type=int, nargs="+", default=[4, 8, 12, 16])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation`",
              file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'n':>4}{'python (us)':>14}{'cython (us)':>14}{'speedup':>10}")
    for n in args.qubits:
        for name, fn in cases(n, rng).items():
            tp = best(fn, _pykernels, args.repeat) * 1e6
            tc = best(fn, _ckernels, args.repeat) * 1e6
            print(f"{name:<14}{n:>4}{tp:>14.2f}{tc:>14.2f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
