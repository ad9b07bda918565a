"""Throughput of the numba and pure-numpy kernel backends.

    python benchmarks/bench_kernels.py [--code bch:63:36] [--batch 120] [--repeats 5]

Reports microseconds per frame for forward decoding and for a training
gradient (forward with tape plus reverse pass), and the speedup of numba over
numpy. The numpy path is what runs when NEURALBP_DISABLE_NUMBA=1.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from neuralbp import kernels
from neuralbp.channel import ChannelConfig, all_zeros_frames
from neuralbp.codes import code_from_spec
from neuralbp.decoder import decode
from neuralbp.params import DecoderParams
from neuralbp.training import gradient


def best_of(fn, repeats: int) -> float:
    fn()  # warm-up (numba compilation, caches)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--code", default="bch:63:36")
    p.add_argument("--batch", type=int, default=120)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--ebn0", type=float, default=4.0)
    p.add_argument("--repeats", type=int, default=5)
    args = p.parse_args(argv)

    code = code_from_spec(args.code)
    rng = np.random.default_rng(0)
    llr = all_zeros_frames(ChannelConfig(args.ebn0, code.rate), code.n, args.batch, rng).llr
    T = args.iterations
    cases = {
        "spa decode": (DecoderParams.spa(T), False),
        "min-sum decode": (DecoderParams.min_sum(T), False),
        "noms decode": (DecoderParams.noms(code, T, rng=rng), False),
        "nspa decode": (DecoderParams.nspa(code, T), False),
        "noms gradient": (DecoderParams.noms(code, T, rng=rng), True),
        "nspa gradient": (DecoderParams.nspa(code, T), True),
    }
    backends = [b for b in ("numba", "numpy") if b in kernels.BACKENDS]
    print(f"{code.name}: n={code.n} E={code.edge_count} T={T} batch={args.batch}")
    header = f"{'case':<16}" + "".join(f"{b + ' us/frame':>18}" for b in backends) + (f"{'speedup':>10}" if len(backends) == 2 else "")
    print(header)
    print("-" * len(header))
    for name, (params, grad) in cases.items():
        row = []
        for b in backends:
            if grad:
                fn = lambda: gradient(code, params, llr, 0, "all", backend=b)  # noqa: E731
            else:
                fn = lambda: decode(code, params, llr, backend=b)  # noqa: E731
            row.append(best_of(fn, args.repeats) / args.batch * 1e6)
        line = f"{name:<16}" + "".join(f"{v:>18.1f}" for v in row)
        if len(row) == 2:
            line += f"{row[1] / row[0]:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
