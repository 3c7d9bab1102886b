"""Time the numba kernels against their pure-numpy twins.

    python benchmarks/bench_kernels.py [--n 60] [--repeat 5]

Both twins are called directly, so the ``RIDEPROFIT_NO_NUMBA`` flag does not
matter here. The first numba call (compilation or cache load) is timed
separately and excluded from the steady-state numbers.
"""

import argparse
import itertools
import time

import numpy as np

from rideprofit import kernels
from rideprofit.matching import make_context
from rideprofit.routing import template_arrays
from rideprofit.trips import synth_generate


def timed(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def blocks_of(n, k, limit):
    combos = list(itertools.islice(itertools.combinations(range(n), k), limit))
    return np.array(combos, dtype=np.int64)


def dp_inputs(ctx, n):
    masks, profits, starts = [], [], [0]
    for low in range(n):
        for k in (1, 2, 3):
            for rest in itertools.combinations(range(low + 1, n), k - 1):
                members = (low,) + rest
                _, p, _, _ = ctx.best(np.array([members], dtype=np.int64))
                masks.append(sum(1 << m for m in members))
                profits.append(p[0])
        starts.append(len(masks))
    return np.array(masks, dtype=np.int64), np.array(profits), np.array(starts, dtype=np.int64)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=60, help="riders for the template kernels")
    ap.add_argument("--dp-n", type=int, default=16, help="riders for the subset DP")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ctx = make_context(synth_generate(args.n, args.seed))
    arrays = (ctx.dmat, ctx.tmat, ctx.solo_d, ctx.solo_t, ctx.fare, ctx.params)
    print(f"{'kernel':<22}{'rows':>8}{'numpy ms':>11}{'numba ms':>11}{'first ms':>11}{'speedup':>9}  equal")
    for k, limit in ((2, 10**6), (3, 20000)):
        blocks = blocks_of(args.n, k, limit)
        codes, pos = template_arrays(k)
        for name, np_fn, nb_fn in (
            ("score", kernels.score_templates_numpy, kernels.score_templates_numba),
            ("best", kernels.best_templates_numpy, kernels.best_templates_numba),
        ):
            t0 = time.perf_counter()
            nb_fn(blocks[:1], codes, pos, *arrays)
            first = time.perf_counter() - t0
            t_np, r_np = timed(lambda: np_fn(blocks, codes, pos, *arrays), args.repeat)
            t_nb, r_nb = timed(lambda: nb_fn(blocks, codes, pos, *arrays), args.repeat)
            equal = all(np.array_equal(a, b) for a, b in zip(r_np, r_nb))
            print(f"{name + f' k={k}':<22}{len(blocks):>8}{t_np * 1e3:>11.2f}{t_nb * 1e3:>11.2f}"
                  f"{first * 1e3:>11.1f}{t_np / t_nb:>9.1f}  {equal}")

    dctx = make_context(synth_generate(args.dp_n, args.seed))
    masks, profits, starts = dp_inputs(dctx, args.dp_n)
    t0 = time.perf_counter()
    kernels.subset_dp_numba(1, masks[:1], profits[:1], np.array([0, 1], dtype=np.int64))
    first = time.perf_counter() - t0
    t_np, r_np = timed(lambda: kernels.subset_dp_numpy(args.dp_n, masks, profits, starts), args.repeat)
    t_nb, r_nb = timed(lambda: kernels.subset_dp_numba(args.dp_n, masks, profits, starts), args.repeat)
    equal = all(np.array_equal(a, b) for a, b in zip(r_np, r_nb))
    print(f"{f'subset_dp n={args.dp_n}':<22}{len(masks):>8}{t_np * 1e3:>11.2f}{t_nb * 1e3:>11.2f}"
          f"{first * 1e3:>11.1f}{t_np / t_nb:>9.1f}  {equal}")


if __name__ == "__main__":
    main()
