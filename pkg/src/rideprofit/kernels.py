"""Hot numeric kernels: route-template scoring and the subset DP.

Every kernel exists twice: a loop body compiled with numba, and a vectorised
numpy twin. ``_accel.USE_NUMBA`` picks which one the public names dispatch to.
Both twins accumulate legs in the same order so their outputs agree bit for bit.

Conventions shared by all kernels
---------------------------------
* Node ``2*i`` is the pickup of local trip ``i``, node ``2*i + 1`` its dropoff.
* A template row holds ``2k`` stop codes; code ``c`` is local block member
  ``c // 2`` with kind ``c % 2`` (0 pickup, 1 dropoff).
* ``pos[t, u, 0]`` / ``pos[t, u, 1]`` are the positions of member ``u``'s
  pickup / dropoff inside template ``t``.
* ``params`` is ``[tan_dist, tan_time, b, f_d, c_b, c_d, c_t]``.
"""

import numpy as np

from . import _accel
from ._accel import njit

OBJ_PROFIT = 0
OBJ_DISTANCE = 1


def pack_params(schedule, policy) -> np.ndarray:
    return np.array(
        [
            policy.tan_dist,
            policy.tan_time,
            policy.b,
            schedule.f_d,
            schedule.c_b,
            schedule.c_d,
            schedule.c_t,
        ],
        dtype=np.float64,
    )


# ---------------------------------------------------------------------------
# template scoring


def _score_loops(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params):
    m, k = blocks.shape
    ntpl, nstop = codes.shape
    tan_d, tan_t, b, fd, cb, cd, ct = params[0], params[1], params[2], params[3], params[4], params[5], params[6]
    profit = np.empty((m, ntpl))
    tdist = np.empty((m, ntpl))
    ttime = np.empty((m, ntpl))
    ud = np.empty((m, ntpl, k))
    ut = np.empty((m, ntpl, k))
    cumd = np.zeros(nstop)
    cumt = np.zeros(nstop)
    for r in range(m):
        for t in range(ntpl):
            c0 = codes[t, 0]
            prev = 2 * blocks[r, c0 // 2] + c0 % 2
            cumd[0] = 0.0
            cumt[0] = 0.0
            for s in range(1, nstop):
                c = codes[t, s]
                node = 2 * blocks[r, c // 2] + c % 2
                cumd[s] = cumd[s - 1] + dmat[prev, node]
                cumt[s] = cumt[s - 1] + tmat[prev, node]
                prev = node
            paid = 0.0
            for u in range(k):
                trip = blocks[r, u]
                di = cumd[pos[t, u, 1]] - cumd[pos[t, u, 0]]
                ti = cumt[pos[t, u, 1]] - cumt[pos[t, u, 0]]
                ud[r, t, u] = di
                ut[r, t, u] = ti
                delta = (di - solo_d[trip]) / solo_d[trip]
                tau = (ti - solo_t[trip]) / solo_t[trip]
                disc = tan_d * delta + tan_t * tau + b
                if disc < 0.0:
                    disc = 0.0
                elif disc > 1.0:
                    disc = 1.0
                paid += (1.0 - disc) * fare[trip]
            dd = cumd[nstop - 1]
            tt = cumt[nstop - 1]
            tdist[r, t] = dd
            ttime[r, t] = tt
            profit[r, t] = paid - (1.0 - fd) * (cb + cd * dd + ct * tt)
    return profit, tdist, ttime, ud, ut


def _score_numpy(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params):
    tan_d, tan_t, b, fd, cb, cd, ct = (float(x) for x in params)
    m, k = blocks.shape
    ntpl, nstop = codes.shape
    # nodes[r, t, s]
    nodes = 2 * blocks[:, codes // 2] + (codes % 2)[None, :, :]
    legs_d = dmat[nodes[:, :, :-1], nodes[:, :, 1:]]
    legs_t = tmat[nodes[:, :, :-1], nodes[:, :, 1:]]
    cumd = np.zeros((m, ntpl, nstop))
    cumt = np.zeros((m, ntpl, nstop))
    # np.cumsum accumulates left to right, same as the loop twin
    cumd[:, :, 1:] = np.cumsum(legs_d, axis=2)
    cumt[:, :, 1:] = np.cumsum(legs_t, axis=2)
    tidx = np.arange(ntpl)[:, None]
    ud = cumd[:, tidx, pos[:, :, 1]] - cumd[:, tidx, pos[:, :, 0]]
    ut = cumt[:, tidx, pos[:, :, 1]] - cumt[:, tidx, pos[:, :, 0]]
    sd = solo_d[blocks][:, None, :]
    st = solo_t[blocks][:, None, :]
    delta = (ud - sd) / sd
    tau = (ut - st) / st
    disc = np.clip(tan_d * delta + tan_t * tau + b, 0.0, 1.0)
    unpaid = (1.0 - disc) * fare[blocks][:, None, :]
    paid = np.zeros((m, ntpl))
    for u in range(k):
        paid += unpaid[:, :, u]
    tdist = cumd[:, :, -1]
    ttime = cumt[:, :, -1]
    profit = paid - (1.0 - fd) * (cb + cd * tdist + ct * ttime)
    return profit, tdist.copy(), ttime.copy(), ud, ut


_score_numba = njit(cache=True)(_score_loops)


def score_templates_numpy(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params):
    return _score_numpy(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params)


def score_templates_numba(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params):
    return _score_numba(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params)


def score_templates(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params):
    """Score every template for every block.

    Returns ``profit, total_dist, total_time`` of shape ``(m, T)`` and the
    per-member in-vehicle distance/time of shape ``(m, T, k)``.
    """
    fn = score_templates_numba if _accel.USE_NUMBA else score_templates_numpy
    return fn(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params)


# ---------------------------------------------------------------------------
# best template per block


def _best_loops(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params, objective):
    m, k = blocks.shape
    ntpl, nstop = codes.shape
    tan_d, tan_t, b, fd, cb, cd, ct = params[0], params[1], params[2], params[3], params[4], params[5], params[6]
    best_idx = np.empty(m, dtype=np.int64)
    best_p = np.empty(m)
    best_d = np.empty(m)
    best_t = np.empty(m)
    cumd = np.zeros(nstop)
    cumt = np.zeros(nstop)
    for r in range(m):
        bi = -1
        bp = 0.0
        bd = 0.0
        bt = 0.0
        for t in range(ntpl):
            c0 = codes[t, 0]
            prev = 2 * blocks[r, c0 // 2] + c0 % 2
            cumd[0] = 0.0
            cumt[0] = 0.0
            for s in range(1, nstop):
                c = codes[t, s]
                node = 2 * blocks[r, c // 2] + c % 2
                cumd[s] = cumd[s - 1] + dmat[prev, node]
                cumt[s] = cumt[s - 1] + tmat[prev, node]
                prev = node
            paid = 0.0
            for u in range(k):
                trip = blocks[r, u]
                di = cumd[pos[t, u, 1]] - cumd[pos[t, u, 0]]
                ti = cumt[pos[t, u, 1]] - cumt[pos[t, u, 0]]
                delta = (di - solo_d[trip]) / solo_d[trip]
                tau = (ti - solo_t[trip]) / solo_t[trip]
                disc = tan_d * delta + tan_t * tau + b
                if disc < 0.0:
                    disc = 0.0
                elif disc > 1.0:
                    disc = 1.0
                paid += (1.0 - disc) * fare[trip]
            dd = cumd[nstop - 1]
            tt = cumt[nstop - 1]
            p = paid - (1.0 - fd) * (cb + cd * dd + ct * tt)
            better = False
            if bi < 0:
                better = True
            elif objective == 0:
                if p > bp:
                    better = True
                elif p == bp:
                    if dd < bd:
                        better = True
                    elif dd == bd and tt < bt:
                        better = True
            else:
                if dd < bd:
                    better = True
                elif dd == bd:
                    if tt < bt:
                        better = True
                    elif tt == bt and p > bp:
                        better = True
            if better:
                bi = t
                bp = p
                bd = dd
                bt = tt
        best_idx[r] = bi
        best_p[r] = bp
        best_d[r] = bd
        best_t[r] = bt
    return best_idx, best_p, best_d, best_t


_best_numba = njit(cache=True)(_best_loops)


def rank_order(profit, tdist, ttime, objective=OBJ_PROFIT):
    """Template indices of one block, best first, under the route ranking."""
    tidx = np.arange(len(profit))
    if objective == OBJ_PROFIT:
        return np.lexsort((tidx, ttime, tdist, -profit))
    return np.lexsort((tidx, -profit, ttime, tdist))


def select_best(profit, tdist, ttime, objective=OBJ_PROFIT):
    """Row-wise best template from ``(m, T)`` score arrays."""
    m = profit.shape[0]
    if objective == OBJ_PROFIT:
        keys = (-profit, tdist, ttime)
    else:
        keys = (tdist, ttime, -profit)
    alive = np.ones(profit.shape, dtype=bool)
    for key in keys:
        masked = np.where(alive, key, np.inf)
        alive &= masked == masked.min(axis=1, keepdims=True)
    idx = np.argmax(alive, axis=1)
    rows = np.arange(m)
    return idx.astype(np.int64), profit[rows, idx], tdist[rows, idx], ttime[rows, idx]


def best_templates_numpy(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params, objective=OBJ_PROFIT):
    profit, tdist, ttime, _, _ = _score_numpy(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params)
    return select_best(profit, tdist, ttime, objective)


def best_templates_numba(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params, objective=OBJ_PROFIT):
    return _best_numba(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params, objective)


def best_templates(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params, objective=OBJ_PROFIT):
    """Best template per block: ``(index, profit, total_dist, total_time)``."""
    if len(blocks) == 0:
        z = np.zeros(0)
        return np.zeros(0, dtype=np.int64), z, z.copy(), z.copy()
    fn = best_templates_numba if _accel.USE_NUMBA else best_templates_numpy
    return fn(blocks, codes, pos, dmat, tmat, solo_d, solo_t, fare, params, objective)


# ---------------------------------------------------------------------------
# subset DP over user bitmasks


def _dp_loops(n, masks, profits, starts):
    size = 1 << n
    best = np.zeros(size)
    choice = np.full(size, -1, dtype=np.int64)
    for mask in range(1, size):
        low = 0
        while not (mask >> low) & 1:
            low += 1
        bv = -np.inf
        bi = -1
        for i in range(starts[low], starts[low + 1]):
            bm = masks[i]
            if bm & mask == bm:
                v = profits[i] + best[mask ^ bm]
                if v > bv:
                    bv = v
                    bi = i
        best[mask] = bv
        choice[mask] = bi
    return best, choice


_dp_numba = njit(cache=True)(_dp_loops)


def _popcount(x):
    x = x.copy()
    count = np.zeros_like(x)
    while np.any(x):
        count += x & 1
        x >>= 1
    return count


def subset_dp_numpy(n, masks, profits, starts):
    size = 1 << n
    best = np.zeros(size)
    choice = np.full(size, -1, dtype=np.int64)
    allm = np.arange(size, dtype=np.int64)
    pc = _popcount(allm)
    lowbit = allm & -allm
    lowidx = np.zeros(size, dtype=np.int64)
    lowidx[1:] = np.log2(lowbit[1:]).round().astype(np.int64)
    for c in range(1, n + 1):
        layer = allm[pc == c]
        layer_low = lowidx[layer]
        for low in range(n):
            sub = layer[layer_low == low]
            if len(sub) == 0:
                continue
            cur = np.full(len(sub), -np.inf)
            cur_i = np.full(len(sub), -1, dtype=np.int64)
            for i in range(starts[low], starts[low + 1]):
                bm = masks[i]
                sel = (sub & bm) == bm
                if not sel.any():
                    continue
                v = profits[i] + best[sub[sel] ^ bm]
                upd = v > cur[sel]
                where = np.flatnonzero(sel)[upd]
                cur[where] = v[upd]
                cur_i[where] = i
            best[sub] = cur
            choice[sub] = cur_i
    return best, choice


def subset_dp_numba(n, masks, profits, starts):
    return _dp_numba(n, masks, profits, starts)


def subset_dp(n, masks, profits, starts):
    """Maximum-profit partition values for every subset of ``n`` users.

    ``masks``/``profits`` list the admissible blocks grouped by their lowest
    member; ``starts[l]:starts[l + 1]`` slices the group with lowest member
    ``l``. ``best[mask]`` is the optimum over partitions of ``mask``;
    ``choice[mask]`` the block holding its lowest member in that optimum
    (first in list order among equals).
    """
    fn = subset_dp_numba if _accel.USE_NUMBA else subset_dp_numpy
    return fn(n, masks, profits, starts)
