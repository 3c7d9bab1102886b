"""Batch ride matchers.

All matchers take either a list of :class:`TripRequest` (plus metric, fares
and discount policy) or a ready :class:`RouteContext`, and return a
:class:`MatchResult` whose cabs partition the riders.

``constraints`` is a sequence of merge predicates
``pred(plan_j, plan_k, merged_plan) -> bool``; the capacity limit is always
applied on top of them. A merge is feasible when some admissible stop order
of the merged cab passes every predicate; the best such order is used.
"""

from __future__ import annotations

import bisect
import heapq
import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import networkx as nx
import numpy as np

from . import kernels
from .pricing import CostSchedule, DiscountPolicy, cab_profit
from .routing import RouteContext, RoutePlan, best_route, template_codes
from .trips import TravelMetric, haversine_metric

MergeConstraint = Callable[[RoutePlan, RoutePlan, RoutePlan], bool]

EXACT_MAX_USERS = 24
EXACT_MAX_ZETA = 3
BRUTE_MAX_USERS = 10
METHODS = ("greedy-max", "greedy-dist", "greedy-profit", "exact", "blossom")


@dataclass
class Cab:
    id: int
    users: tuple[int, ...]
    plan: RoutePlan
    profit: float


@dataclass
class MatchResult:
    method: str
    cabs: list[Cab]
    total_profit: float
    solo_count: int
    merge_count: int
    wall_time: float
    params: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    @property
    def n_users(self) -> int:
        return sum(len(c.users) for c in self.cabs)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "params": self.params,
            "cabs": [
                {
                    "id": c.id,
                    "users": list(c.users),
                    "sequence": [repr(s) for s in c.plan.sequence],
                    "dist": c.plan.total_dist,
                    "time": c.plan.total_time,
                    "profit": c.profit,
                }
                for c in self.cabs
            ],
            "n_users": self.n_users,
            "n_cabs": len(self.cabs),
            "total_profit": self.total_profit,
            "solo_count": self.solo_count,
            "merge_count": self.merge_count,
            "wall_time": self.wall_time,
        }

    def summary_row(self) -> dict:
        return {
            "method": self.method,
            "n_users": self.n_users,
            "n_cabs": len(self.cabs),
            "solo_count": self.solo_count,
            "merge_count": self.merge_count,
            "total_profit": self.total_profit,
            "wall_time": self.wall_time,
        }


def check_partition(result: MatchResult, user_ids) -> None:
    seen: list[int] = []
    for cab in result.cabs:
        seen.extend(cab.users)
    if len(seen) != len(set(seen)) or set(seen) != set(user_ids):
        raise RuntimeError(f"{result.method}: cabs do not partition the riders")


def make_context(trips, metric=None, schedule=None, policy=None, objective="profit") -> RouteContext:
    if isinstance(trips, RouteContext):
        return trips
    return RouteContext(trips, metric or haversine_metric(), schedule or CostSchedule(), policy or DiscountPolicy(), objective)


def _finish(method, ctx, groups, merges, t0, params, stats=None) -> MatchResult:
    """Build the result from ``(members, template)`` groups in local indices."""
    cabs = []
    for members, tpl in groups:
        members = sorted(members)
        plan = ctx.plan(members, tpl)
        profit = cab_profit(ctx.schedule, ctx.policy, plan).profit
        users = tuple(int(ctx.ids[m]) for m in members)
        cabs.append(Cab(users[0], users, plan, profit))
    cabs.sort(key=lambda c: c.id)
    total = 0.0
    for c in cabs:
        total += c.profit
    result = MatchResult(
        method,
        cabs,
        total,
        sum(1 for c in cabs if len(c.users) == 1),
        merges,
        time.perf_counter() - t0,
        params,
        stats or {},
    )
    check_partition(result, ctx.ids.tolist())
    return result


@dataclass
class _CabState:
    members: tuple[int, ...]  # local indices, ascending
    template: int
    profit: float
    dist: float
    serial: int

    @property
    def size(self) -> int:
        return len(self.members)


class _Merger:
    """Scores candidate merges, through the kernels or through predicates."""

    def __init__(self, ctx: RouteContext, constraints):
        self.ctx = ctx
        self.constraints = list(constraints or [])

    def solo_states(self) -> list[_CabState]:
        n = len(self.ctx)
        idx, prof, dist, _ = self.ctx.best(np.arange(n, dtype=np.int64)[:, None])
        return [_CabState((i,), int(idx[i]), float(prof[i]), float(dist[i]), i) for i in range(n)]

    def merge_values(self, pairs: Sequence[tuple[_CabState, _CabState]]):
        """``(template, merged_profit, merged_dist)`` arrays, one entry per pair.

        Template -1 with profit -inf marks a merge no stop order can satisfy.
        """
        m = len(pairs)
        tpl = np.full(m, -1, dtype=np.int64)
        prof = np.full(m, -np.inf)
        dist = np.full(m, np.inf)
        if m == 0:
            return tpl, prof, dist
        if self.constraints:
            for r, (a, b) in enumerate(pairs):
                found = self.constrained(a, b)
                if found is not None:
                    tpl[r], prof[r], dist[r] = found
            return tpl, prof, dist
        merged = [tuple(sorted(a.members + b.members)) for a, b in pairs]
        by_size: dict[int, list[int]] = {}
        for r, mem in enumerate(merged):
            by_size.setdefault(len(mem), []).append(r)
        for rows in by_size.values():
            blocks = np.array([merged[r] for r in rows], dtype=np.int64)
            i, p, d, _ = self.ctx.best(blocks)
            tpl[rows], prof[rows], dist[rows] = i, p, d
        return tpl, prof, dist

    def constrained(self, a: _CabState, b: _CabState):
        ctx = self.ctx
        plan_a = ctx.plan(a.members, a.template)
        plan_b = ctx.plan(b.members, b.template)
        members = tuple(sorted(a.members + b.members))
        profit, tdist, ttime, _, _ = ctx.score(np.array([members], dtype=np.int64))
        for t in kernels.rank_order(profit[0], tdist[0], ttime[0], ctx._obj):
            merged = ctx.plan(members, int(t))
            if all(pred(plan_a, plan_b, merged) for pred in self.constraints):
                return int(t), float(profit[0, t]), float(tdist[0, t])
        return None


def _merge(a: _CabState, b: _CabState, tpl, prof, dist, serial) -> _CabState:
    return _CabState(tuple(sorted(a.members + b.members)), int(tpl), float(prof), float(dist), serial)


# ---------------------------------------------------------------------------
# greedy max-profit


def greedy_max_profit(
    trips,
    zeta: int = 3,
    metric: TravelMetric | None = None,
    schedule: CostSchedule | None = None,
    policy: DiscountPolicy | None = None,
    constraints: Sequence[MergeConstraint] | None = None,
) -> MatchResult:
    """Repeatedly merge the pool pair with the largest profit gain.

    Gains of exactly zero are merged; the loop stops once the best gain is
    negative or fewer than two cabs remain in the pool. Equal gains go to the
    pair with the smaller ``(min cab id, max cab id)``, a cab's id being its
    smallest rider id. Heap entries naming a merged-away cab are dropped when
    popped.
    """
    t0 = time.perf_counter()
    ctx = make_context(trips, metric, schedule, policy)
    merger = _Merger(ctx, constraints)
    ids = ctx.ids
    states = {s.serial: s for s in merger.solo_states()}
    serial = len(states)
    pool: set[int] = set(states) if zeta > 1 else set()
    full: list[int] = [] if zeta > 1 else sorted(states)
    heap: list = []

    def candidates(pairs):
        tpl, prof, dist = merger.merge_values([(states[a], states[b]) for a, b in pairs])
        out = []
        for (a, b), t, p, d in zip(pairs, tpl, prof, dist):
            if t < 0:
                continue
            gain = p - states[a].profit - states[b].profit
            ia, ib = int(ids[states[a].members[0]]), int(ids[states[b].members[0]])
            out.append((-gain, min(ia, ib), max(ia, ib), a, b, int(t), float(p), float(d)))
        return out

    if pool:
        heap = candidates(list(combinations(sorted(pool), 2)))
        heapq.heapify(heap)

    merges = 0
    while len(pool) >= 2 and heap:
        neg_gain, _, _, a, b, t, p, d = heapq.heappop(heap)
        if a not in pool or b not in pool:
            continue
        if -neg_gain < 0:
            break
        new = _merge(states[a], states[b], t, p, d, serial)
        states[serial] = new
        serial += 1
        pool -= {a, b}
        merges += 1
        if new.size >= zeta:
            full.append(new.serial)
            continue
        partners = sorted(c for c in pool if states[c].size + new.size <= zeta)
        pool.add(new.serial)
        for entry in candidates([(c, new.serial) for c in partners]):
            heapq.heappush(heap, entry)
    groups = [(states[c].members, states[c].template) for c in full + sorted(pool)]
    return _finish("greedy-max", ctx, groups, merges, t0, {"zeta": zeta})


# ---------------------------------------------------------------------------
# greedy order


ORDERS = ("distance_desc", "profit_asc")


def greedy_order(
    trips,
    zeta: int = 3,
    order: str = "distance_desc",
    metric: TravelMetric | None = None,
    schedule: CostSchedule | None = None,
    policy: DiscountPolicy | None = None,
    constraints: Sequence[MergeConstraint] | None = None,
) -> MatchResult:
    """Pop the head of an ordered cab list and merge it with the first cab
    further down that yields a strictly positive gain.

    ``distance_desc`` orders by route distance, longest first; ``profit_asc``
    by cab profit, lowest first. Equal keys fall back to cab id. Merged cabs
    are re-inserted at the position of their recomputed key.
    """
    if order not in ORDERS:
        raise ValueError(f"unknown order {order!r}; expected one of {ORDERS}")
    t0 = time.perf_counter()
    ctx = make_context(trips, metric, schedule, policy)
    merger = _Merger(ctx, constraints)
    ids = ctx.ids

    def key(s: _CabState):
        primary = -s.dist if order == "distance_desc" else s.profit
        return (primary, int(ids[s.members[0]]))

    line: list[tuple] = []  # sorted (key, state)
    serial = len(ctx)
    done: list[_CabState] = []
    for s in merger.solo_states():
        if zeta > 1:
            line.append((key(s), s.serial, s))
        else:
            done.append(s)
    line.sort(key=lambda e: (e[0], e[1]))
    merges = 0
    while line:
        _, _, head = line.pop(0)
        rest = [(r, e[2]) for r, e in enumerate(line) if e[2].size + head.size <= zeta]
        hit = None
        if merger.constraints:
            for r, other in rest:
                found = merger.constrained(head, other)
                if found is not None and found[1] - head.profit - other.profit > 0:
                    hit = (r, other, found)
                    break
        elif rest:
            tpl, prof, dist = merger.merge_values([(head, other) for _, other in rest])
            gains = prof - head.profit - np.array([o.profit for _, o in rest])
            pos = np.flatnonzero(gains > 0)
            if len(pos):
                j = int(pos[0])
                hit = (rest[j][0], rest[j][1], (tpl[j], prof[j], dist[j]))
        if hit is None:
            done.append(head)
            continue
        r, other, (t, p, d) = hit
        del line[r]
        new = _merge(head, other, t, p, d, serial)
        serial += 1
        merges += 1
        if new.size >= zeta:
            done.append(new)
        else:
            entry = (key(new), new.serial, new)
            bisect.insort(line, entry, key=lambda e: (e[0], e[1]))
    name = "greedy-dist" if order == "distance_desc" else "greedy-profit"
    groups = [(s.members, s.template) for s in done]
    return _finish(name, ctx, groups, merges, t0, {"zeta": zeta, "order": order})


# ---------------------------------------------------------------------------
# exact partition DP and brute-force oracle


class _BlockTable:
    """Best feasible route of every block of at most ``zeta`` riders.

    Without predicates every block is feasible. With predicates a block is
    feasible when it splits into two feasible blocks whose best plans admit a
    merged stop order passing every predicate, i.e. when a sequence of
    pairwise merges can produce it.
    """

    def __init__(self, ctx: RouteContext, zeta: int, constraints):
        self.ctx = ctx
        self.zeta = zeta
        self.constraints = list(constraints or [])
        self.values: dict[tuple[int, ...], tuple[int, float]] = {}
        n = len(ctx)
        for k in range(1, min(zeta, n) + 1):
            blocks = list(combinations(range(n), k))
            if not blocks:
                continue
            if not self.constraints or k == 1:
                idx, prof, _, _ = ctx.best(np.array(blocks, dtype=np.int64))
                for blk, t, p in zip(blocks, idx, prof):
                    self.values[blk] = (int(t), float(p))
            else:
                for blk in blocks:
                    found = self._constrained(blk)
                    if found is not None:
                        self.values[blk] = found

    def _constrained(self, blk):
        ctx = self.ctx
        profit, tdist, ttime, _, _ = ctx.score(np.array([blk], dtype=np.int64))
        splits = []
        rest = blk[1:]
        for r in range(0, len(rest)):
            for extra in combinations(rest, r):
                left = tuple(sorted((blk[0],) + extra))
                right = tuple(u for u in blk if u not in left)
                if left in self.values and right in self.values:
                    splits.append(
                        (ctx.plan(left, self.values[left][0]), ctx.plan(right, self.values[right][0]))
                    )
        if not splits:
            return None
        for t in kernels.rank_order(profit[0], tdist[0], ttime[0], ctx._obj):
            merged = ctx.plan(blk, int(t))
            for pa, pb in splits:
                if all(pred(pa, pb, merged) for pred in self.constraints):
                    return int(t), float(profit[0, t])
        return None


def _check_exact_guard(n, zeta, limit):
    if n > limit:
        raise ValueError(f"{n} riders exceeds the exact-solver limit of {limit}")
    if zeta > EXACT_MAX_ZETA:
        raise ValueError(f"cab capacity {zeta} exceeds the exact-solver limit of {EXACT_MAX_ZETA}")


def exact_partition_dp(
    trips,
    zeta: int = 3,
    metric: TravelMetric | None = None,
    schedule: CostSchedule | None = None,
    policy: DiscountPolicy | None = None,
    constraints: Sequence[MergeConstraint] | None = None,
) -> MatchResult:
    """Profit-optimal partition by dynamic programming over rider subsets.

    ``best(mask)`` is the maximum over blocks holding the lowest rider of
    ``mask`` of ``p(block) + best(mask minus block)``; among equal values the
    lexicographically smallest block wins.
    """
    t0 = time.perf_counter()
    ctx = make_context(trips, metric, schedule, policy)
    n = len(ctx)
    _check_exact_guard(n, zeta, EXACT_MAX_USERS)
    if n == 0:
        return _finish("exact", ctx, [], 0, t0, {"zeta": zeta}, {"best_empty": 0.0})
    table = _BlockTable(ctx, zeta, constraints)
    order = sorted(table.values)  # lexicographic, hence grouped by lowest member
    masks = np.array([sum(1 << u for u in blk) for blk in order], dtype=np.int64)
    profits = np.array([table.values[blk][1] for blk in order])
    lows = np.array([blk[0] for blk in order], dtype=np.int64)
    starts = np.searchsorted(lows, np.arange(n + 1)).astype(np.int64)
    best, choice = kernels.subset_dp(n, masks, profits, starts)
    groups = []
    mask = (1 << n) - 1
    while mask:
        blk = order[int(choice[mask])]
        groups.append((blk, table.values[blk][0]))
        mask ^= int(masks[choice[mask]])
    stats = {"dp_value": float(best[(1 << n) - 1]), "blocks": len(order)}
    return _finish("exact", ctx, groups, n - len(groups), t0, {"zeta": zeta}, stats)


def restricted_growth_strings(n: int, max_block: int):
    """Every set partition of ``range(n)`` with blocks of at most ``max_block``
    elements, as restricted growth strings in lexicographic order."""
    if n == 0:
        yield ()
        return
    rgs = [0] * n
    sizes = [0] * (n + 1)

    def rec(i, nblocks):
        if i == n:
            yield tuple(rgs)
            return
        for b in range(nblocks + 1):
            if sizes[b] < max_block:
                rgs[i] = b
                sizes[b] += 1
                yield from rec(i + 1, max(nblocks, b + 1))
                sizes[b] -= 1

    yield from rec(0, 0)


class _ReferenceBlocks:
    """Block values from :func:`routing.best_route` and scalar metric calls.

    Shares no code with the matrix kernels, which makes the brute-force
    search an independent check on the subset DP.
    """

    def __init__(self, ctx: RouteContext):
        self.ctx = ctx
        self.values: dict[tuple[int, ...], tuple[int, float]] = {}

    def get(self, blk):
        if blk not in self.values:
            ctx = self.ctx
            users = [ctx.trips[u] for u in blk]
            plan = best_route(users, ctx.metric, ctx.schedule, ctx.policy, ctx.objective)
            local = {int(ctx.ids[u]): i for i, u in enumerate(blk)}
            codes = tuple(2 * local[s.user_id] + int(s.kind) for s in plan.sequence)
            tpl = template_codes(len(blk)).index(codes)
            self.values[blk] = (tpl, cab_profit(ctx.schedule, ctx.policy, plan).profit)
        return self.values[blk]


def brute_force_partitions(
    trips,
    zeta: int = 3,
    metric: TravelMetric | None = None,
    schedule: CostSchedule | None = None,
    policy: DiscountPolicy | None = None,
    constraints: Sequence[MergeConstraint] | None = None,
) -> MatchResult:
    """Enumerate every admissible partition and keep the most profitable.

    Without constraints, block profits come from the reference route search
    rather than the kernels.
    """
    t0 = time.perf_counter()
    ctx = make_context(trips, metric, schedule, policy)
    n = len(ctx)
    _check_exact_guard(n, zeta, BRUTE_MAX_USERS)
    if constraints or ctx.metric is None:
        table = _BlockTable(ctx, zeta, constraints)
        lookup = table.values.get
    else:
        lookup = _ReferenceBlocks(ctx).get
    best_val, best_blocks, count = -np.inf, None, 0
    for rgs in restricted_growth_strings(n, zeta):
        count += 1
        blocks: dict[int, list[int]] = {}
        for u, b in enumerate(rgs):
            blocks.setdefault(b, []).append(u)
        total = 0.0
        for blk in blocks.values():
            v = lookup(tuple(blk))
            if v is None:
                total = -np.inf
                break
            total += v[1]
        if total > best_val:
            best_val, best_blocks = total, [tuple(b) for b in blocks.values()]
    groups = [(blk, lookup(blk)[0]) for blk in best_blocks or []]
    stats = {"partitions": count, "best_value": float(best_val) if n else 0.0}
    return _finish("brute", ctx, groups, n - len(groups), t0, {"zeta": zeta}, stats)


# ---------------------------------------------------------------------------
# maximum-weight pairing for two-seat cabs


def max_weight_pairs(n: int, edges: Sequence[tuple[int, int, float]]) -> list[tuple[int, int]]:
    """Maximum-weight matching on positive-weight edges, solved per connected
    component (two-vertex components directly, larger ones by blossom)."""
    edges = [(int(a), int(b), float(w)) for a, b, w in edges if w > 0]
    if not edges:
        return []
    g = nx.Graph()
    g.add_weighted_edges_from(edges)
    pairs = []
    for comp in nx.connected_components(g):
        if len(comp) == 2:
            a, b = sorted(comp)
            pairs.append((a, b))
            continue
        sub = g.subgraph(comp)
        for a, b in nx.max_weight_matching(sub, maxcardinality=False):
            pairs.append((min(a, b), max(a, b)))
    return sorted(pairs)


def pair_gains(ctx: RouteContext, constraints=None):
    """Gain and best template of every feasible rider pair of ``ctx``.

    Returns ``(pairs, gains, templates, solo_templates, solo_profits)``.
    """
    merger = _Merger(ctx, constraints)
    solo = merger.solo_states()
    pairs = list(combinations(range(len(ctx)), 2))
    tpl, prof, _ = merger.merge_values([(solo[a], solo[b]) for a, b in pairs])
    solo_p = np.array([s.profit for s in solo])
    pa = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    gains = prof - solo_p[pa[:, 0]] - solo_p[pa[:, 1]] if len(pairs) else np.zeros(0)
    return pa, gains, tpl, np.array([s.template for s in solo], dtype=np.int64), solo_p


def pairwise_blossom(
    trips,
    metric: TravelMetric | None = None,
    schedule: CostSchedule | None = None,
    policy: DiscountPolicy | None = None,
    constraints: Sequence[MergeConstraint] | None = None,
) -> MatchResult:
    """Optimal two-seat matching: maximum-weight matching on pair gains."""
    t0 = time.perf_counter()
    ctx = make_context(trips, metric, schedule, policy)
    pa, gains, tpl, solo_tpl, _ = pair_gains(ctx, constraints)
    ok = np.isfinite(gains) & (gains > 0)
    lookup = {(int(a), int(b)): int(t) for (a, b), t, good in zip(pa, tpl, ok) if good}
    matched = max_weight_pairs(len(ctx), [(a, b, g) for (a, b), g, good in zip(pa.tolist(), gains, ok) if good])
    used = set()
    groups = []
    for a, b in matched:
        used.update((a, b))
        groups.append(((a, b), lookup[(a, b)]))
    for i in range(len(ctx)):
        if i not in used:
            groups.append(((i,), int(solo_tpl[i])))
    stats = {"positive_edges": int(ok.sum()), "matched_pairs": len(matched)}
    return _finish("blossom", ctx, groups, len(matched), t0, {"zeta": 2}, stats)


# ---------------------------------------------------------------------------


def run_method(name: str, ctx: RouteContext, zeta: int = 3, constraints=None) -> MatchResult:
    if name == "greedy-max":
        return greedy_max_profit(ctx, zeta, constraints=constraints)
    if name == "greedy-dist":
        return greedy_order(ctx, zeta, "distance_desc", constraints=constraints)
    if name == "greedy-profit":
        return greedy_order(ctx, zeta, "profit_asc", constraints=constraints)
    if name == "exact":
        return exact_partition_dp(ctx, zeta, constraints=constraints)
    if name == "brute":
        return brute_force_partitions(ctx, zeta, constraints=constraints)
    if name == "blossom":
        if zeta != 2:
            raise ValueError("blossom matching needs cab capacity 2")
        return pairwise_blossom(ctx, constraints=constraints)
    raise ValueError(f"unknown matching method {name!r}")
