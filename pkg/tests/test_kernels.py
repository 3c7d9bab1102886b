import itertools
import json
import os
import subprocess
import sys
from functools import lru_cache

import numpy as np
import pytest

from rideprofit import _accel, kernels
from rideprofit.matching import make_context
from rideprofit.routing import template_arrays
from rideprofit.trips import synth_generate


def ctx_arrays(n, seed):
    ctx = make_context(synth_generate(n, seed))
    return ctx, (ctx.dmat, ctx.tmat, ctx.solo_d, ctx.solo_t, ctx.fare, ctx.params)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_score_twins_bit_identical(k):
    ctx, arrays = ctx_arrays(9, seed=k)
    blocks = np.array(list(itertools.combinations(range(9), k))[:60], dtype=np.int64)
    codes, pos = template_arrays(k)
    a = kernels.score_templates_numpy(blocks, codes, pos, *arrays)
    b = kernels.score_templates_numba(blocks, codes, pos, *arrays)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


@pytest.mark.parametrize("objective", [kernels.OBJ_PROFIT, kernels.OBJ_DISTANCE])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_best_twins_bit_identical(k, objective):
    ctx, arrays = ctx_arrays(10, seed=20 + k)
    blocks = np.array(list(itertools.combinations(range(10), k)), dtype=np.int64)
    codes, pos = template_arrays(k)
    a = kernels.best_templates_numpy(blocks, codes, pos, *arrays, objective)
    b = kernels.best_templates_numba(blocks, codes, pos, *arrays, objective)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_best_template_agrees_with_full_ranking():
    ctx, arrays = ctx_arrays(8, seed=4)
    blocks = np.array(list(itertools.combinations(range(8), 3)), dtype=np.int64)
    codes, pos = template_arrays(3)
    profit, tdist, ttime, _, _ = kernels.score_templates_numpy(blocks, codes, pos, *arrays)
    idx, _, _, _ = kernels.best_templates(blocks, codes, pos, *arrays)
    for r in range(len(blocks)):
        assert idx[r] == kernels.rank_order(profit[r], tdist[r], ttime[r])[0]


def test_select_best_tie_breaks():
    profit = np.array([[1.0, 2.0, 2.0, 2.0]])
    tdist = np.array([[0.0, 5.0, 4.0, 4.0]])
    ttime = np.array([[0.0, 1.0, 3.0, 2.0]])
    assert kernels.select_best(profit, tdist, ttime)[0][0] == 3
    assert kernels.select_best(profit, tdist, ttime, kernels.OBJ_DISTANCE)[0][0] == 0
    # full tie falls to the lowest template index
    assert kernels.select_best(np.ones((1, 3)), np.ones((1, 3)), np.ones((1, 3)))[0][0] == 0


def test_empty_block_list():
    ctx, arrays = ctx_arrays(3, seed=0)
    codes, pos = template_arrays(2)
    idx, p, d, t = kernels.best_templates(np.zeros((0, 2), dtype=np.int64), codes, pos, *arrays)
    assert len(idx) == len(p) == 0


def random_blocks(n, seed, max_block=3, integer=False):
    rng = np.random.default_rng(seed)
    masks, profits, starts = [], [], [0]
    for low in range(n):
        for k in range(1, max_block + 1):
            for rest in itertools.combinations(range(low + 1, n), k - 1):
                if k > 1 and rng.random() < 0.3:
                    continue  # some blocks infeasible
                masks.append(sum(1 << m for m in (low,) + rest))
                profits.append(float(rng.integers(-3, 6)) if integer else rng.normal())
        starts.append(len(masks))
    return np.array(masks, dtype=np.int64), np.array(profits), np.array(starts, dtype=np.int64)


def dp_oracle(n, masks, profits):
    blocks = list(zip(masks.tolist(), profits.tolist()))

    @lru_cache(maxsize=None)
    def best(mask):
        if mask == 0:
            return 0.0
        low = (mask & -mask).bit_length() - 1
        return max(p + best(mask ^ m) for m, p in blocks if m & mask == m and m >> low & 1 and m & ((1 << low) - 1) == 0)

    return best((1 << n) - 1)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("integer", [False, True])
def test_subset_dp_twins_and_oracle(seed, integer):
    n = 9
    masks, profits, starts = random_blocks(n, seed, integer=integer)
    b1, c1 = kernels.subset_dp_numpy(n, masks, profits, starts)
    b2, c2 = kernels.subset_dp_numba(n, masks, profits, starts)
    assert np.array_equal(b1, b2) and np.array_equal(c1, c2)
    assert b1[0] == 0
    assert b1[-1] == pytest.approx(dp_oracle(n, masks, profits), abs=1e-12)


def test_backend_flag_parsing(monkeypatch):
    for value, disabled in (("1", True), ("yes", True), ("ON", True), ("0", False), ("", False)):
        monkeypatch.setenv("RIDEPROFIT_NO_NUMBA", value)
        assert _accel._flag_disabled() is disabled


SCRIPT = """
import json
from rideprofit import backend
from rideprofit.matching import run_method, make_context
from rideprofit.trips import synth_generate
ctx = make_context(synth_generate(14, 5))
out = {m: run_method(m, ctx, 3).to_dict() for m in ("greedy-max", "greedy-dist", "exact")}
for d in out.values():
    d.pop("wall_time")
print(json.dumps({"backend": backend(), "results": out}))
"""


def run_backend(disable):
    env = dict(os.environ)
    env.pop("RIDEPROFIT_NO_NUMBA", None)
    if disable:
        env["RIDEPROFIT_NO_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def test_env_flag_switches_backend_without_changing_results():
    fast, slow = run_backend(False), run_backend(True)
    assert fast["backend"] == "numba" and slow["backend"] == "numpy"
    assert fast["results"] == slow["results"]
