"""Compare the compiled and pure-numpy bicubic resampling cores.

    python benchmarks/bench_resample.py [--repeat N]

For every case both backends run on the same input; the script checks the
outputs are bit-identical and prints the best-of-N wall time of each.
"""

from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from freqvit._ext import _resample_py
from freqvit.imaging import _taps

try:
    from freqvit._ext import _resample_c
except ImportError:
    _resample_c = None

CASES = [
    # (in side, out side, channels)
    (32, 16, 3),
    (16, 32, 3),
    (224, 112, 3),
    (112, 224, 3),
    (96, 48, 3),
    (14, 28, 64),  # positional grid upsample
]


def run_case(backend, src, ix, wx, iy, wy, repeat, number):
    fn = lambda: backend.resize_separable(src, ix, wx, iy, wy, True)  # noqa: E731
    out = np.asarray(fn())
    best = min(timeit.repeat(fn, repeat=repeat, number=number)) / number
    return out, best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _resample_c is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'case':<18s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}  identical")
    ok = True
    for n_in, n_out, c in CASES:
        src = rng.random((n_in, n_in, c))
        ix, wx = _taps(n_in, n_out, -0.5)
        number = max(1, 20000 // (n_out * n_out))
        out_py, t_py = run_case(_resample_py, src, ix, wx, ix, wx, args.repeat, number)
        out_c, t_c = run_case(_resample_c, src, ix, wx, ix, wx, args.repeat, number)
        same = out_py.shape == out_c.shape and np.array_equal(out_py, out_c)
        ok &= same
        label = f"{n_in}->{n_out} x{c}"
        print(f"{label:<18s} {t_py * 1e3:10.3f} {t_c * 1e3:10.3f} {t_py / t_c:7.1f}x  {same}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
