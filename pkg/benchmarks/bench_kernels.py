"""Compare the compiled and pure-Python kernel backends.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Each kernel is
called on identical inputs by both backends; outputs are checked for agreement
before timing so a fast-but-wrong build cannot look good.
"""
import argparse
import timeit

import numpy as np

from baasmec import kernels
from baasmec.nn import DenseNet


def cases(rng):
    net = DenseNet.q_network(16, 36, rng=rng)
    x = rng.normal(size=16)
    q = rng.normal(size=120)
    mask = rng.random(120) < 0.5
    P, M, U = 50, 3, 6
    hash_levels = np.array([0.0, 20, 40, 60, 80, 100])
    ues = rng.integers(0, U, size=(P, M)).astype(np.int64)
    levels = rng.integers(0, 6, size=(P, M)).astype(np.int64)
    demands = rng.uniform(0.6, 1.6, U)
    sizes = rng.uniform(1, 5, U)
    return {
        "mlp_forward_vec": lambda k: k.mlp_forward_vec(x, net.weights, net.biases, False),
        "masked_argmax": lambda k: k.masked_argmax(q, mask),
        "score_population": lambda k: k.score_population(
            ues, levels, demands, sizes, hash_levels, 5.0, 0.15, 500.0, 27.0, 1.0, 1.0, 1.0),
        "repair_population": lambda k: k.repair_population(
            np.zeros((P, M), dtype=np.int64), np.full((P, M), 5, dtype=np.int64), U, hash_levels, 150.0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=2000)
    args = ap.parse_args(argv)
    backends = {name: kernels.load(name) for name in kernels.available()}
    if "cython" not in backends:
        print("compiled kernels not built; only the python backend is available")
    table = cases(np.random.default_rng(0))
    print(f"{'kernel':<20}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for name, call in table.items():
        outs = [call(mod) for mod in backends.values()]
        for o in outs[1:]:
            if o is not None and not np.allclose(np.asarray(o, float), np.asarray(outs[0], float)):
                raise SystemExit(f"{name}: backends disagree")
        times = [timeit.timeit(lambda m=mod: call(m), number=args.repeat) / args.repeat
                 for mod in backends.values()]
        speed = times[-1] / times[0] if len(times) > 1 else 1.0
        print(f"{name:<20}" + "".join(f"{t * 1e6:>12.2f}us" for t in times) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
