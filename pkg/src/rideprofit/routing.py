"""Pickup/dropoff sequences for a shared cab and their evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from itertools import permutations
from typing import Callable, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from . import kernels
from .pricing import CostSchedule, DiscountPolicy, cab_profit
from .trips import TravelMetric, TripRequest

MAX_CAB_USERS = 4


class Kind(IntEnum):
    PICKUP = 0
    DROPOFF = 1


class Stop(NamedTuple):
    user_id: int
    kind: Kind

    def __repr__(self):
        return f"{'S' if self.kind == Kind.PICKUP else 'D'}{self.user_id}"


@dataclass(frozen=True)
class RoutePlan:
    sequence: tuple[Stop, ...]
    total_dist: float
    total_time: float
    user_dist: dict
    user_time: dict
    solo_dist: dict
    solo_time: dict
    delta: dict
    tau: dict

    @property
    def users(self) -> tuple[int, ...]:
        return tuple(sorted(self.user_dist))


class InfeasibleRouteError(ValueError):
    pass


# ---------------------------------------------------------------------------
# sequence templates


def _contiguous(codes: Sequence[int]) -> bool:
    onboard = 0
    for s, c in enumerate(codes[:-1]):
        onboard += 1 if c % 2 == 0 else -1
        if onboard == 0:
            return False
    return True


@lru_cache(maxsize=None)
def template_codes(k: int) -> tuple[tuple[int, ...], ...]:
    """Admissible stop orders for ``k`` riders, as code tuples in lexicographic order.

    Code ``2u`` is rider ``u``'s pickup, ``2u + 1`` the dropoff. A template
    is admissible when every pickup precedes its dropoff and the cab is never
    empty between its first and last stop.
    """
    if not 1 <= k <= MAX_CAB_USERS:
        raise ValueError(f"cab size {k} outside supported range 1..{MAX_CAB_USERS}")
    out = []
    for perm in permutations(range(2 * k)):
        where = {c: i for i, c in enumerate(perm)}
        if all(where[2 * u] < where[2 * u + 1] for u in range(k)) and _contiguous(perm):
            out.append(perm)
    return tuple(out)


@lru_cache(maxsize=None)
def template_arrays(k: int) -> tuple[np.ndarray, np.ndarray]:
    codes = np.array(template_codes(k), dtype=np.int64)
    pos = np.empty((len(codes), k, 2), dtype=np.int64)
    for t, row in enumerate(codes):
        for s, c in enumerate(row):
            pos[t, c // 2, c % 2] = s
    codes.setflags(write=False)
    pos.setflags(write=False)
    return codes, pos


def valid_sequences(users: Iterable[TripRequest]) -> list[tuple[Stop, ...]]:
    ids = sorted(u.id for u in users)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate user ids")
    kinds = (Kind.PICKUP, Kind.DROPOFF)
    return [tuple(Stop(ids[c // 2], kinds[c % 2]) for c in tpl) for tpl in template_codes(len(ids))]


# ---------------------------------------------------------------------------
# evaluation against a metric


def _build_plan(sequence, leg, solo) -> RoutePlan:
    """``leg(a, b)`` gives (km, min) between two stops; ``solo[u]`` the solo (km, min)."""
    n = len(sequence)
    legs = [leg(sequence[s], sequence[s + 1]) for s in range(n - 1)]
    where = {stop: i for i, stop in enumerate(sequence)}
    user_dist, user_time, solo_dist, solo_time, delta, tau = {}, {}, {}, {}, {}, {}
    for u in sorted({s.user_id for s in sequence}):
        sd, st = solo[u]
        if not (sd > 0 and st > 0):
            raise InfeasibleRouteError(f"user {u} has zero solo distance or time")
        a, b = where[Stop(u, Kind.PICKUP)], where[Stop(u, Kind.DROPOFF)]
        d = t = 0.0
        for s in range(a, b):
            d += legs[s][0]
            t += legs[s][1]
        user_dist[u], user_time[u] = d, t
        solo_dist[u], solo_time[u] = sd, st
        delta[u] = (d - sd) / sd
        tau[u] = (t - st) / st
    total_d = total_t = 0.0
    for d, t in legs:
        total_d += d
        total_t += t
    return RoutePlan(tuple(sequence), total_d, total_t, user_dist, user_time, solo_dist, solo_time, delta, tau)


def _stop_point(trip: TripRequest, kind: Kind):
    return trip.source if kind == Kind.PICKUP else trip.dest


def _scalar_legs(metric: TravelMetric, by_id):
    """Memoised ``leg(a, b)`` and solo lookups over scalar metric calls."""
    cache: dict = {}

    def leg(a, b):
        key = (a, b)
        if key not in cache:
            pa, pb = _stop_point(by_id[a.user_id], a.kind), _stop_point(by_id[b.user_id], b.kind)
            cache[key] = (metric.dist(pa, pb), metric.time(pa, pb))
        return cache[key]

    solo = {u: (metric.dist(t.source, t.dest), metric.time(t.source, t.dest)) for u, t in by_id.items()}
    return leg, solo


def evaluate_sequence(sequence: Sequence[Stop], metric: TravelMetric, trips) -> RoutePlan:
    """Distances, times and fractional detours of one stop order.

    ``trips`` is a mapping or sequence giving the :class:`TripRequest` of each
    user id.
    """
    by_id = trips if isinstance(trips, dict) else {t.id: t for t in trips}
    users = {s.user_id for s in sequence}
    leg, solo = _scalar_legs(metric, {u: by_id[u] for u in users})
    return _build_plan(sequence, leg, solo)


def _rank_key(plan: RoutePlan, profit: float, order: int, objective: str):
    if objective == "profit":
        return (-profit, plan.total_dist, plan.total_time, order)
    return (plan.total_dist, plan.total_time, -profit, order)


def best_route(
    users: Iterable[TripRequest],
    metric: TravelMetric,
    schedule: CostSchedule,
    policy: DiscountPolicy,
    objective: str = "profit",
    accept: Callable[[RoutePlan], bool] | None = None,
) -> RoutePlan | None:
    """Best admissible stop order by profit (ties: shorter, quicker, lexicographic).

    ``objective="distance"`` ranks by total distance first instead. Plans
    rejected by ``accept`` are passed over; ``None`` means none survived.
    """
    users = list(users)
    leg, solo = _scalar_legs(metric, {u.id: u for u in users})
    scored = []
    for order, seq in enumerate(valid_sequences(users)):
        plan = _build_plan(seq, leg, solo)
        profit = cab_profit(schedule, policy, plan).profit
        scored.append((_rank_key(plan, profit, order, objective), plan))
    scored.sort(key=lambda kv: kv[0])
    for _, plan in scored:
        if accept is None or accept(plan):
            return plan
    return None


def check_plan(plan: RoutePlan, tol: float = 1e-9, legs: Callable | None = None) -> None:
    """Raise ``AssertionError`` unless ``plan`` satisfies precedence, contiguity
    and (when ``legs`` is given) leg-sum totals."""
    seen: dict[int, list[Kind]] = {}
    for stop in plan.sequence:
        seen.setdefault(stop.user_id, []).append(stop.kind)
    for u, kinds in seen.items():
        assert kinds == [Kind.PICKUP, Kind.DROPOFF], f"user {u} stops out of order: {kinds}"
    assert set(seen) == set(plan.user_dist), "plan users do not match its stops"
    onboard = 0
    for stop in plan.sequence[:-1]:
        onboard += 1 if stop.kind == Kind.PICKUP else -1
        assert onboard > 0, "cab runs empty mid-route"
    if legs is not None:
        d = t = 0.0
        for a, b in zip(plan.sequence, plan.sequence[1:]):
            ld, lt = legs(a, b)
            d += ld
            t += lt
        assert abs(d - plan.total_dist) <= tol * max(1.0, d), "distance legs do not sum to total"
        assert abs(t - plan.total_time) <= tol * max(1.0, t), "time legs do not sum to total"


# ---------------------------------------------------------------------------
# matrix-backed context used by the matchers


class RouteContext:
    """Precomputed node matrices for a batch of trips.

    Trips are held sorted by id; local index ``i`` owns nodes ``2i`` (pickup)
    and ``2i + 1`` (dropoff). Blocks of local indices are scored through
    :mod:`kernels`.
    """

    def __init__(
        self,
        trips: Sequence[TripRequest],
        metric: TravelMetric | None,
        schedule: CostSchedule,
        policy: DiscountPolicy,
        objective: str = "profit",
        _matrices: tuple[np.ndarray, np.ndarray] | None = None,
    ):
        self.trips = sorted(trips, key=lambda t: t.id)
        if len({t.id for t in self.trips}) != len(self.trips):
            raise ValueError("duplicate trip ids")
        self.metric = metric
        self.schedule = schedule
        self.objective = objective
        self._obj = kernels.OBJ_PROFIT if objective == "profit" else kernels.OBJ_DISTANCE
        if objective not in ("profit", "distance"):
            raise ValueError(f"unknown route objective {objective!r}")
        if _matrices is None:
            points = []
            for t in self.trips:
                points += [t.source, t.dest]
            dm, tm = metric.matrices(points) if points else (np.zeros((0, 0)), np.zeros((0, 0)))
        else:
            dm, tm = _matrices
        self.dmat = np.ascontiguousarray(dm, dtype=np.float64)
        self.tmat = np.ascontiguousarray(tm, dtype=np.float64)
        n = len(self.trips)
        self.solo_d = np.array([self.dmat[2 * i, 2 * i + 1] for i in range(n)], dtype=np.float64)
        self.solo_t = np.array([self.tmat[2 * i, 2 * i + 1] for i in range(n)], dtype=np.float64)
        bad = np.flatnonzero(~((self.solo_d > 0) & (self.solo_t > 0)))
        if len(bad):
            raise InfeasibleRouteError(f"trip id {self.trips[bad[0]].id} has zero solo distance or time")
        self.fare = schedule.c_b + schedule.c_d * self.solo_d + schedule.c_t * self.solo_t
        self.ids = np.array([t.id for t in self.trips], dtype=np.int64)
        self.set_policy(policy)

    def __len__(self):
        return len(self.trips)

    def set_policy(self, policy: DiscountPolicy) -> None:
        self.policy = policy
        self.params = kernels.pack_params(self.schedule, policy)

    def with_policy(self, policy: DiscountPolicy) -> "RouteContext":
        ctx = self.subset(np.arange(len(self)))
        ctx.set_policy(policy)
        return ctx

    def subset(self, local_idx) -> "RouteContext":
        local_idx = np.asarray(local_idx, dtype=np.int64)
        nodes = np.empty(2 * len(local_idx), dtype=np.int64)
        nodes[0::2] = 2 * local_idx
        nodes[1::2] = 2 * local_idx + 1
        mats = (self.dmat[np.ix_(nodes, nodes)], self.tmat[np.ix_(nodes, nodes)])
        return RouteContext(
            [self.trips[i] for i in local_idx], self.metric, self.schedule, self.policy, self.objective, _matrices=mats
        )

    # -- kernels ----------------------------------------------------------

    def best(self, blocks: np.ndarray):
        """Best template per block (rows of equal size ``k``)."""
        blocks = np.ascontiguousarray(blocks, dtype=np.int64)
        codes, pos = template_arrays(blocks.shape[1])
        return kernels.best_templates(
            blocks, codes, pos, self.dmat, self.tmat, self.solo_d, self.solo_t, self.fare, self.params, self._obj
        )

    def score(self, blocks: np.ndarray):
        blocks = np.ascontiguousarray(blocks, dtype=np.int64)
        codes, pos = template_arrays(blocks.shape[1])
        return kernels.score_templates(
            blocks, codes, pos, self.dmat, self.tmat, self.solo_d, self.solo_t, self.fare, self.params
        )

    # -- plans ------------------------------------------------------------

    def plan(self, members: Sequence[int], template: int) -> RoutePlan:
        """Exact :class:`RoutePlan` for local ``members`` (ascending) and template index."""
        members = list(members)
        tpl = template_codes(len(members))[template]
        seq = tuple(Stop(int(self.ids[members[c // 2]]), Kind(c % 2)) for c in tpl)
        local = {int(self.ids[m]): m for m in members}

        def leg(a, b):
            na = 2 * local[a.user_id] + int(a.kind)
            nb = 2 * local[b.user_id] + int(b.kind)
            return float(self.dmat[na, nb]), float(self.tmat[na, nb])

        solo = {u: (float(self.solo_d[m]), float(self.solo_t[m])) for u, m in local.items()}
        return _build_plan(seq, leg, solo)

    def solo_plan(self, member: int) -> RoutePlan:
        return self.plan([member], 0)

    def ranked_templates(self, members: Sequence[int]) -> np.ndarray:
        profit, tdist, ttime, _, _ = self.score(np.array([sorted(members)]))
        return kernels.rank_order(profit[0], tdist[0], ttime[0], self._obj)

    def best_plan(
        self, members: Sequence[int], accept: Callable[[RoutePlan], bool] | None = None
    ) -> tuple[int, RoutePlan] | None:
        members = sorted(members)
        if accept is None:
            idx, _, _, _ = self.best(np.array([members]))
            t = int(idx[0])
            return t, self.plan(members, t)
        for t in self.ranked_templates(members):
            plan = self.plan(members, int(t))
            if accept(plan):
                return int(t), plan
        return None

    def iter_plans(self, members: Sequence[int]) -> Iterator[RoutePlan]:
        members = sorted(members)
        for t in range(len(template_codes(len(members)))):
            yield self.plan(members, t)
