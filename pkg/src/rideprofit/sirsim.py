"""Detour-aware (SIR-gamma) matching and its market-share trade-off.

A merge is SIR-gamma feasible when every rider of the merged cab sees their
disutility (fare plus ``alpha`` times detour km) drop by at least ``gamma``
relative to the cab they rode in before the merge. Riders opt into sharing by
coin flips; stricter routing (larger gamma) draws extra riders in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .matching import max_weight_pairs
from .pricing import CostSchedule, DiscountPolicy, user_cost
from .routing import RouteContext, RoutePlan
from .trips import KM_PER_MILE, NYC_BOX, TravelMetric, TripRequest, haversine_metric, synth_generate

ALPHA_MAX_PER_KM = 5.0 / KM_PER_MILE
PROFIT_LOWER_BOUNDS = (0.0, 0.02, 0.05, 0.10)
DEFAULT_GAMMA_GRID = tuple(round(0.1 * i, 1) for i in range(10))
DEFAULT_CIN_GRID = tuple(100 * i for i in range(1, 11))
# disutility comparisons absorb leg-summation rounding
SIR_TOL = 1e-9


@dataclass
class UserProfile:
    trip: TripRequest
    alpha: float  # $ per km of detour
    in_market: bool
    opted_base: bool = False
    opted_final: bool = False


@dataclass(frozen=True)
class SirConfig:
    gamma: float = 0.0
    c_in: float = 500.0
    base_share: float = 0.6
    outside_factor: float = 0.5
    realizations: int = 30
    kappa: float = 0.5
    baseline_sir0: bool = False

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not (0 <= self.base_share <= 1 and 0 <= self.outside_factor <= 1):
            raise ValueError("base_share and outside_factor must lie in [0, 1]")
        if self.realizations < 1:
            raise ValueError("need at least one realization")


# ---------------------------------------------------------------------------
# disutility and feasibility


def disutility(user: UserProfile, plan: RoutePlan, schedule: CostSchedule, policy: DiscountPolicy) -> float:
    u = user.trip.id
    fare = user_cost(schedule, policy, plan.solo_dist[u], plan.solo_time[u], plan.delta[u], plan.tau[u])
    return fare + user.alpha * (plan.user_dist[u] - plan.solo_dist[u])


def sir_feasible(
    plan_j: RoutePlan,
    plan_k: RoutePlan,
    merged_plan: RoutePlan,
    gamma: float,
    profiles,
    schedule: CostSchedule,
    policy: DiscountPolicy,
) -> bool:
    """Every rider of ``merged_plan`` gains at least ``gamma`` over their own
    plan before the merge (``plan_j`` or ``plan_k``)."""
    for before in (plan_j, plan_k):
        for u in before.users:
            prof = profiles[u]
            gain = disutility(prof, before, schedule, policy) - disutility(prof, merged_plan, schedule, policy)
            if gain < gamma - SIR_TOL:
                return False
    return True


def sir_constraint(gamma: float, profiles, schedule: CostSchedule, policy: DiscountPolicy):
    def pred(plan_j, plan_k, merged_plan):
        return sir_feasible(plan_j, plan_k, merged_plan, gamma, profiles, schedule, policy)

    return pred


# ---------------------------------------------------------------------------
# participation


def p_base(profile: UserProfile, policy: DiscountPolicy, kappa: float = 0.5) -> float:
    return min(1.0, kappa * (policy.theta_dist / 90.0) * (policy.b / 0.1) / (1.0 + profile.alpha))


def p_in(profile: UserProfile, policy: DiscountPolicy, gamma: float, c_in: float) -> float:
    return min(1.0, (c_in / 1000.0) * (policy.theta_dist / 90.0) * (policy.b / 0.1) * gamma / (1.0 + profile.alpha))


def opt_in_baseline(profile: UserProfile, policy: DiscountPolicy, kappa: float = 0.5, rng=None) -> bool:
    if not profile.in_market:
        return False
    rng = rng if rng is not None else np.random.default_rng()
    return bool(rng.random() < p_base(profile, policy, kappa))


def opt_in_response(
    profile: UserProfile,
    policy: DiscountPolicy,
    gamma: float,
    c_in: float,
    outside_factor: float = 0.5,
    rng=None,
    u: float | None = None,
) -> bool:
    """Whether a rider who did not opt in at baseline joins under SIR-gamma.

    Pass one uniform ``u`` per rider to sweep gamma consistently: the rider
    joins at every gamma whose bias exceeds ``u``.
    """
    if profile.opted_base:
        return True
    if u is None:
        rng = rng if rng is not None else np.random.default_rng()
        u = rng.random()
    factor = 1.0 if profile.in_market else outside_factor
    return bool(u < factor * p_in(profile, policy, gamma, c_in))


def make_profiles(trips: Sequence[TripRequest], policy: DiscountPolicy, config: SirConfig, rng) -> list[UserProfile]:
    n = len(trips)
    alpha = rng.uniform(0.0, ALPHA_MAX_PER_KM, size=n)
    in_market = rng.random(n) < config.base_share
    coins = rng.random(n)
    out = []
    for i, t in enumerate(trips):
        prof = UserProfile(t, float(alpha[i]), bool(in_market[i]))
        prof.opted_base = bool(prof.in_market and coins[i] < p_base(prof, policy, config.kappa))
        prof.opted_final = prof.opted_base
        out.append(prof)
    return out


# ---------------------------------------------------------------------------
# pair tables


class PairTable:
    """Every rider pair of one instance, scored once for all gammas.

    For each pair and stop order this keeps the merged profit and the SIR
    slack (the smallest disutility drop over both riders versus riding solo).
    A pair is SIR-gamma feasible when its best-ranked order with slack at
    least gamma exists; its weight is then that order's profit gain.
    """

    def __init__(self, ctx: RouteContext, alpha: np.ndarray):
        self.ctx = ctx
        n = len(ctx)
        iu, ju = np.triu_indices(n, k=1)
        self.pairs = np.stack([iu, ju], axis=1).astype(np.int64)
        idx, sp, _, _ = ctx.best(np.arange(n, dtype=np.int64)[:, None])
        self.solo_profit = sp
        self.solo_template = idx
        sched, pol = ctx.schedule, ctx.policy
        solo_dis = (1.0 - min(1.0, max(0.0, pol.b))) * ctx.fare
        if len(self.pairs):
            profit, tdist, ttime, ud, ut = ctx.score(self.pairs)
        else:
            profit = tdist = ttime = np.zeros((0, 4))
            ud = ut = np.zeros((0, 4, 2))
        sd = ctx.solo_d[self.pairs][:, None, :]
        st = ctx.solo_t[self.pairs][:, None, :]
        disc = np.clip(pol.tan_dist * (ud - sd) / sd + pol.tan_time * (ut - st) / st + pol.b, 0.0, 1.0)
        dis = (1.0 - disc) * ctx.fare[self.pairs][:, None, :] + alpha[self.pairs][:, None, :] * (ud - sd)
        self.slack = (solo_dis[self.pairs][:, None, :] - dis).min(axis=2)
        self.profit, self.tdist, self.ttime = profit, tdist, ttime
        self.base_gain = profit - sp[self.pairs].sum(axis=1)[:, None] if len(self.pairs) else profit
        self._cache: dict[float | None, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def gains(self, gamma: float | None):
        """``(template, gain, feasible)`` per pair; ``gamma=None`` drops the SIR rule."""
        if gamma in self._cache:
            return self._cache[gamma]
        m = len(self.pairs)
        if gamma is None:
            allowed = np.ones(self.profit.shape, dtype=bool)
        else:
            allowed = self.slack >= gamma - SIR_TOL
        feasible = allowed.any(axis=1) if m else np.zeros(0, dtype=bool)
        prof = np.where(allowed, self.profit, -np.inf)
        if m:
            tpl, best, _, _ = kernels.select_best(prof, np.where(allowed, self.tdist, np.inf), self.ttime)
        else:
            tpl, best = np.zeros(0, dtype=np.int64), np.zeros(0)
        gain = np.where(feasible, best - self.solo_profit[self.pairs].sum(axis=1) if m else best, -np.inf)
        out = (tpl, gain, feasible)
        self._cache[gamma] = out
        return out

    def positive_edges(self, gamma: float | None):
        _, gain, _ = self.gains(gamma)
        keep = np.flatnonzero(gain > 0)
        return self.pairs[keep], gain[keep]

    def match(self, opted: np.ndarray, gamma: float | None):
        """Optimal two-seat matching of the opted riders.

        Returns ``(profit, matched_pairs)``; unmatched opted riders ride solo.
        """
        edges, w = self.positive_edges(gamma)
        sel = opted[edges[:, 0]] & opted[edges[:, 1]] if len(edges) else np.zeros(0, dtype=bool)
        e, ww = edges[sel], w[sel]
        profit = float(self.solo_profit[opted].sum())
        if len(e) == 0:
            return profit, 0
        matched = max_weight_pairs(len(self.ctx), [(a, b, g) for (a, b), g in zip(e.tolist(), ww.tolist())])
        lookup = {(a, b): g for (a, b), g in zip(e.tolist(), ww.tolist())}
        for pair in matched:
            profit += lookup[pair]
        return profit, len(matched)

    def feasible_edge_count(self, opted: np.ndarray, gamma: float) -> int:
        _, _, feasible = self.gains(gamma)
        both = opted[self.pairs[:, 0]] & opted[self.pairs[:, 1]]
        return int((feasible & both).sum())


# ---------------------------------------------------------------------------
# experiment


@dataclass
class SirInstance:
    id: int
    ctx: RouteContext
    profiles: list[UserProfile]
    table: PairTable

    @property
    def n(self) -> int:
        return len(self.profiles)

    def __post_init__(self):
        self.alpha = np.array([p.alpha for p in self.profiles])
        self._in_market = np.array([p.in_market for p in self.profiles], dtype=bool)
        self._opted_base = np.array([p.opted_base for p in self.profiles], dtype=bool)

    def flags(self):
        return self._in_market, self._opted_base


def _rng(*keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def prepare_instance(
    inst_id: int,
    trips: Sequence[TripRequest],
    metric: TravelMetric,
    schedule: CostSchedule,
    policy: DiscountPolicy,
    config: SirConfig,
    seed: int,
) -> SirInstance:
    ctx = RouteContext(trips, metric, schedule, policy)
    profiles = make_profiles(ctx.trips, policy, config, _rng(seed, inst_id, 0))
    alpha = np.array([p.alpha for p in profiles])
    return SirInstance(inst_id, ctx, profiles, PairTable(ctx, alpha))


def response_variates(seed: int, inst_id: int, c_in_index: int, realization: int, n: int) -> np.ndarray:
    return _rng(seed, inst_id, 1, c_in_index, realization).random(n)


def p_in_vector(alpha, in_market, policy, gamma, c_in, outside_factor):
    """Join bias of every rider; same formula as :func:`p_in` times the group factor."""
    bias = np.minimum(1.0, (c_in / 1000.0) * (policy.theta_dist / 90.0) * (policy.b / 0.1) * gamma / (1.0 + alpha))
    return np.where(in_market, bias, outside_factor * bias)


def final_opt_ins(inst: SirInstance, policy, gamma, c_in, outside_factor, u):
    """``(flipped, opted_final)`` masks for one gamma given the variates ``u``."""
    in_market, opted_base = inst.flags()
    flipped = ~opted_base & (u < p_in_vector(inst.alpha, in_market, policy, gamma, c_in, outside_factor))
    return flipped, flipped | opted_base


def market_share(in_market: np.ndarray, flipped: np.ndarray) -> float:
    return float((in_market | flipped).sum()) / len(in_market)


def fixed_set_sweep(inst: SirInstance, opted: np.ndarray, gamma_grid: Sequence[float]) -> list[dict]:
    """Matching of one fixed opted set across gammas (monotonicity probe)."""
    rows = []
    for g in gamma_grid:
        profit, pairs = inst.table.match(opted, g)
        rows.append(
            {"gamma": g, "feasible_edges": inst.table.feasible_edge_count(opted, g), "matched_pairs": pairs, "profit": profit}
        )
    return rows


@dataclass
class SirReport:
    rows: list[dict]
    gamma_grid: list[float]
    c_in_grid: list[float]
    base_share: float  # realized in-market share, mean over instances
    baseline_profit: float  # mean over instances
    summary: list[dict] = field(default_factory=list)
    min_share_increase: dict = field(default_factory=dict)  # (gamma, lb) -> increase or inf
    envelope: list[dict] = field(default_factory=list)

    def cell(self, c_in, gamma) -> dict:
        for s in self.summary:
            if s["c_in"] == c_in and s["gamma"] == gamma:
                return s
        raise KeyError((c_in, gamma))

    def min_share_rows(self) -> list[dict]:
        return [
            {"gamma": g, "profit_lower_bound": lb, "min_share_increase": v}
            for (g, lb), v in sorted(self.min_share_increase.items())
        ]


def _summarise(report: SirReport, lower_bounds) -> None:
    groups: dict[tuple, list[dict]] = {}
    for r in report.rows:
        groups.setdefault((r["c_in"], r["gamma"]), []).append(r)
    summary = []
    for c_in in report.c_in_grid:
        for g in report.gamma_grid:
            rs = groups[(c_in, g)]
            k = len(rs)
            summary.append(
                {
                    "c_in": c_in,
                    "gamma": g,
                    "profit": math.fsum(r["profit"] for r in rs) / k,
                    "baseline_profit": math.fsum(r["baseline_profit"] for r in rs) / k,
                    "matched_pairs": math.fsum(r["matched_pairs"] for r in rs) / k,
                    "market_share": math.fsum(r["market_share"] for r in rs) / k,
                    "opted_share": math.fsum(r["opted_share"] for r in rs) / k,
                    "share_increase": math.fsum(r["share_increase"] for r in rs) / k,
                }
            )
    report.summary = summary
    base = report.baseline_profit
    for s in summary:
        s["profit_increase"] = (s["profit"] - base) / abs(base) if base else 0.0
    for g in report.gamma_grid:
        cells = [s for s in summary if s["gamma"] == g]
        for lb in lower_bounds:
            ok = [s["share_increase"] for s in cells if s["profit_increase"] >= lb]
            report.min_share_increase[(g, lb)] = min(ok) if ok else math.inf
    running = -math.inf
    envelope = []
    for s in sorted(summary, key=lambda s: (s["share_increase"], s["gamma"], s["c_in"])):
        running = max(running, s["profit_increase"])
        envelope.append({"share_increase": s["share_increase"], "max_profit_increase": running})
    report.envelope = envelope


def run_sir_experiment(
    instances: Sequence[Sequence[TripRequest]],
    gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
    c_in_grid: Sequence[float] = DEFAULT_CIN_GRID,
    config: SirConfig | None = None,
    schedule: CostSchedule | None = None,
    policy: DiscountPolicy | None = None,
    seed: int = 0,
    metric: TravelMetric | None = None,
    lower_bounds: Sequence[float] = PROFIT_LOWER_BOUNDS,
) -> SirReport:
    """Profit and market share across ``gamma`` x ``c_in`` for two-seat cabs.

    Per instance the origins, destinations, market membership and baseline
    opt-ins are drawn once. Each ``(c_in, realization)`` gives every rider one
    uniform that is reused across the gamma sweep, so opt-in sets only grow
    with gamma. The baseline matches the baseline opt-ins without the SIR
    rule (or with the gamma=0 rule when ``config.baseline_sir0``).
    """
    if not gamma_grid or not c_in_grid:
        raise ValueError("gamma and c_in grids must be non-empty")
    config = config or SirConfig()
    schedule = schedule or CostSchedule()
    policy = policy or DiscountPolicy(40.0, 0.0, 0.10)
    metric = metric or haversine_metric()
    gamma_grid = [float(g) for g in gamma_grid]
    c_in_grid = [float(c) for c in c_in_grid]
    rows = []
    baselines, shares = [], []
    for inst_id, trips in enumerate(instances):
        inst = prepare_instance(inst_id, trips, metric, schedule, policy, config, seed)
        in_market, opted_base = inst.flags()
        base_profit, _ = inst.table.match(opted_base, 0.0 if config.baseline_sir0 else None)
        baselines.append(base_profit)
        shares.append(float(in_market.mean()))
        for ci, c_in in enumerate(c_in_grid):
            for r in range(config.realizations):
                u = response_variates(seed, inst_id, ci, r, inst.n)
                for g in gamma_grid:
                    flipped, opted = final_opt_ins(inst, policy, g, c_in, config.outside_factor, u)
                    profit, pairs = inst.table.match(opted, g)
                    rows.append(
                        {
                            "instance_id": inst_id,
                            "realization": r,
                            "c_in": c_in,
                            "gamma": g,
                            "market_share": market_share(in_market, flipped),
                            "opted_share": float(opted.sum()) / inst.n,
                            "share_increase": float((flipped & ~in_market).sum()) / inst.n,
                            "matched_pairs": pairs,
                            "profit": profit,
                            "baseline_profit": base_profit,
                        }
                    )
    report = SirReport(rows, gamma_grid, c_in_grid, math.fsum(shares) / len(shares), math.fsum(baselines) / len(baselines))
    _summarise(report, lower_bounds)
    return report


def synthetic_batches(
    n_batches: int = 60, mean_users: float = 210.0, seed: int = 0, box=NYC_BOX
) -> list[list[TripRequest]]:
    """One-minute batches with Poisson-distributed sizes."""
    rng = _rng(seed, 99)
    sizes = np.maximum(2, rng.poisson(mean_users, size=n_batches))
    return [synth_generate(int(k), int(_rng(seed, 98, i).integers(2**31)), box, 1.0) for i, k in enumerate(sizes)]
