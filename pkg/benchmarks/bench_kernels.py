"""Compare the compiled register kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--max-qubits 16]

Sizes up to 16 qubits cover an 8-qubit density matrix treated as a vector.
"""

import argparse
import timeit

import numpy as np

from xqml import _fallback

try:
    from xqml import _kernels
except ImportError:
    _kernels = None


def cases(rng, n):
    vec = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    vec /= np.linalg.norm(vec)
    one = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[0]
    two = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))[0]
    diag = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
    return [
        ("matrix 1q", "apply_matrix", (vec, one, (n // 2,), n)),
        ("matrix 2q", "apply_matrix", (vec, two, (0, n - 1), n)),
        ("diagonal 2q", "apply_diagonal", (vec, diag, (1, n - 2), n)),
    ]


def best_of(fn, args, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(lambda: fn(*args), number=1), 1e-7)))
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--min-qubits", type=int, default=4)
    ap.add_argument("--max-qubits", type=int, default=16)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled kernels not built; run `python3 setup.py build_ext --inplace` first")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'qubits':>6} {'kernel':<12} {'cython us':>11} {'numpy us':>11} {'speedup':>8}")
    for n in range(args.min_qubits, args.max_qubits + 1, 2):
        for label, name, call in cases(rng, n):
            fast = getattr(_kernels, name)
            slow = getattr(_fallback, name)
            assert np.allclose(fast(*call), slow(*call), atol=1e-12)
            tf = best_of(fast, call, args.repeat)
            ts = best_of(slow, call, args.repeat)
            print(f"{n:>6} {label:<12} {tf * 1e6:>11.1f} {ts * 1e6:>11.1f} {ts / tf:>7.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
