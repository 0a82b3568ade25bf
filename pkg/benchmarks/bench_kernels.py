"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--bits 200000] [--decodes 200]

Times the binary range coder (encode and decode of i.i.d. bits) and the
polar list decoder at E=128, K=63, and checks that both backends produce
identical output.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from dcizip import _pykernels
from dcizip.coders.arithmetic import quantize
from dcizip.pdcch.polar import encode_payload, info_mask
from dcizip.pdcch.sweep import noise_sigma

try:
    from dcizip import _kernels
except ImportError:
    _kernels = None


def _best(fn, repeat=3):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_coder(mod, bits, p1q):
    def run():
        enc = mod.BinaryArithmeticEncoder()
        enc.encode(bits, p1q)
        stream = np.asarray(enc.finish())
        dec = mod.BinaryArithmeticDecoder(stream)
        back = np.asarray(dec.decode(p1q))
        return stream, back
    return _best(run)


def bench_scl(mod, llrs, mask, list_size):
    def run():
        return [np.asarray(mod.scl_decode(l, mask, list_size)[0]) for l in llrs]
    return _best(run, repeat=1)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bits", type=int, default=200_000)
    ap.add_argument("--decodes", type=int, default=200)
    ap.add_argument("--list-size", type=int, default=8)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)

    p = rng.uniform(0.02, 0.98, args.bits)
    bits = (rng.random(args.bits) < p).astype(np.uint8)
    p1q = quantize(p)
    mask = info_mask(128, 63)
    sigma = noise_sigma(-2.0)
    llrs = []
    for _ in range(args.decodes):
        x = encode_payload(rng.integers(0, 2, 39, dtype=np.uint8), 128)
        y = 1.0 - 2.0 * x + sigma * rng.standard_normal(128)
        llrs.append(2.0 * y / sigma ** 2)

    backends = [("python", _pykernels)] + ([("cython", _kernels)] if _kernels else [])
    results = {}
    print(f"{'kernel':28s} {'backend':8s} {'time':>10s} {'per item':>12s}")
    for name, mod in backends:
        t, (stream, back) = bench_coder(mod, bits, p1q)
        assert np.array_equal(back, bits)
        print(f"{'range coder enc+dec':28s} {name:8s} {t:9.3f}s {t / args.bits * 1e9:9.1f} ns/bit")
        ts, decoded = bench_scl(mod, llrs, mask, args.list_size)
        print(f"{'SCL decode L=' + str(args.list_size):28s} {name:8s} {ts:9.3f}s "
              f"{ts / args.decodes * 1e6:9.1f} us/frame")
        results[name] = (t, ts, stream, decoded)
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        same = np.array_equal(py[2], cy[2]) and all(np.array_equal(a, b) for a, b in zip(py[3], cy[3]))
        print(f"speed-up: coder {py[0] / cy[0]:.1f}x, SCL {py[1] / cy[1]:.1f}x; outputs identical: {same}")
    else:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
