"""UCB1 learning of the discount slope from simulated daily profit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .matching import run_method
from .pricing import CostSchedule, DiscountPolicy
from .routing import RouteContext
from .trips import NYC_BOX, BoundingBox, TravelMetric, haversine_metric, synth_generate

DEFAULT_THETA_GRID = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0)


@dataclass
class ArmStats:
    theta: float
    total_profit: float = 0.0
    pulls: int = 0

    @property
    def mean(self) -> float:
        return self.total_profit / self.pulls


@dataclass
class BanditState:
    """Learner state. ``scale`` divides profits before indexing; ``None``
    until set from the initial round (normalised mode) or fixed to 1 (raw)."""

    arms: list[ArmStats]
    day: int = 0
    history: list[tuple[int, int, float]] = field(default_factory=list)
    normalize: bool = False
    scale: float | None = None

    @classmethod
    def fresh(cls, thetas: Sequence[float], normalize: bool = False, scale: float | None = None) -> "BanditState":
        if not thetas:
            raise ValueError("theta grid is empty")
        return cls([ArmStats(float(t)) for t in thetas], normalize=normalize, scale=scale if normalize else 1.0)


def ucb_index(arm: ArmStats, t: int, scale: float = 1.0) -> float:
    return arm.total_profit / (arm.pulls * scale) + math.sqrt(2.0 * math.log(t) / arm.pulls)


def choose_arm(state: BanditState) -> int:
    if state.day < len(state.arms):
        return state.day
    scale = state.scale or 1.0
    t = state.day
    best, best_v = 0, -math.inf
    for h, arm in enumerate(state.arms):
        v = ucb_index(arm, t, scale)
        if v > best_v:
            best, best_v = h, v
    return best


def ucb_step(state: BanditState, profit_of: Callable[[float], float]) -> BanditState:
    """Play one day: round-robin over the grid first, then the UCB1 argmax.

    The index for the next day uses the number of days played so far; ties
    go to the lowest arm index.
    """
    h = choose_arm(state)
    profit = float(profit_of(state.arms[h].theta))
    if not math.isfinite(profit):
        raise ValueError(f"non-finite profit {profit} for theta={state.arms[h].theta}")
    arm = state.arms[h]
    arm.total_profit += profit
    arm.pulls += 1
    state.day += 1
    state.history.append((state.day, h, profit))
    if state.normalize and state.scale is None and state.day == len(state.arms):
        peak = max(abs(p) for _, _, p in state.history)
        state.scale = peak if peak > 0 else 1.0
    return state


# ---------------------------------------------------------------------------
# demand and the simulated day


class DemandModel:
    """Probability that a rider opts into sharing at slope ``theta`` (degrees)."""

    def __call__(self, theta: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class QuadraticDemand(DemandModel):
    p0: float = 0.2
    p1: float = 0.95

    def __post_init__(self):
        if not 0 <= self.p0 <= self.p1 <= 1:
            raise ValueError("need 0 <= p0 <= p1 <= 1")

    def __call__(self, theta):
        return self.p0 + (self.p1 - self.p0) * (theta / 90.0) ** 2


@dataclass(frozen=True)
class PiecewiseDemand(DemandModel):
    """Linear interpolation through ``(theta, prob)`` knots, flat outside."""

    thetas: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.thetas) != len(self.probs) or not self.thetas:
            raise ValueError("demand table needs matching, non-empty columns")
        if any(b <= a for a, b in zip(self.thetas, self.thetas[1:])):
            raise ValueError("demand table thetas must increase")
        if any(b < a for a, b in zip(self.probs, self.probs[1:])):
            raise ValueError("demand curve must be non-decreasing")
        if not all(0 <= p <= 1 for p in self.probs):
            raise ValueError("demand probabilities must lie in [0, 1]")

    def __call__(self, theta):
        return float(np.interp(theta, self.thetas, self.probs))


@dataclass
class MarketSetup:
    metric: TravelMetric = field(default_factory=haversine_metric)
    schedule: CostSchedule = field(default_factory=CostSchedule)
    b: float = 0.10
    zeta: int = 3
    matcher: str = "greedy-max"


def day_uniforms(n: int, rng_seed) -> np.ndarray:
    return np.random.default_rng(rng_seed).random(n)


def simulate_day(
    theta: float,
    trips,
    demand: DemandModel,
    setup: MarketSetup | None = None,
    rng_seed=0,
    uniforms: np.ndarray | None = None,
) -> float:
    """Provider profit for one day at slope ``theta``.

    Each rider opts in when their uniform draw falls below ``demand(theta)``;
    draws come from ``rng_seed`` unless given, so one set of draws can be
    shared across slopes. Riders who stay out contribute nothing.
    """
    setup = setup or MarketSetup()
    policy = DiscountPolicy(theta, 0.0, setup.b)
    ctx = trips if isinstance(trips, RouteContext) else RouteContext(trips, setup.metric, setup.schedule, policy)
    if uniforms is None:
        uniforms = day_uniforms(len(ctx), rng_seed)
    opted = np.flatnonzero(uniforms < demand(theta))
    if len(opted) == 0:
        return 0.0
    sub = ctx.subset(opted)
    sub.set_policy(policy)
    return run_method(setup.matcher, sub, setup.zeta).total_profit


# ---------------------------------------------------------------------------
# full learning run


def synthetic_days(n_per_day: int, seed: int, box: BoundingBox = NYC_BOX, horizon: float = 15.0):
    """Day source: ``day -> trips`` drawn from ``(seed, day)``."""

    def source(day: int):
        s = np.random.SeedSequence([seed, day, 0]).generate_state(1)[0]
        return synth_generate(n_per_day, int(s), box, horizon)

    return source


def _opt_seed(seed: int, day: int) -> int:
    return int(np.random.SeedSequence([seed, day, 1]).generate_state(1)[0])


@dataclass
class LearningReport:
    thetas: list[float]
    chosen: list[int]
    profits: list[float]
    table: np.ndarray  # (days, arms) profit of every arm on every day
    state: BanditState

    @property
    def days(self) -> int:
        return len(self.chosen)

    @property
    def bdf_means(self) -> np.ndarray:
        return self.table.mean(axis=0)

    @property
    def bdf_arm(self) -> int:
        return int(np.argmax(self.bdf_means))

    @property
    def bdf_mean(self) -> float:
        return float(self.bdf_means[self.bdf_arm])

    def cumavg(self) -> np.ndarray:
        p = np.asarray(self.profits)
        return np.cumsum(p) / np.arange(1, len(p) + 1)

    def bdf_cumavg(self) -> np.ndarray:
        col = self.table[:, self.bdf_arm]
        return np.cumsum(col) / np.arange(1, len(col) + 1)

    def regret(self) -> np.ndarray:
        """Cumulative regret over t: the oracle's running average minus the learner's.

        On the last day this is the full-horizon oracle mean minus the
        learner's average daily profit.
        """
        return self.bdf_cumavg() - self.cumavg()

    def best_arm_share(self) -> float:
        return float(np.mean(np.asarray(self.chosen) == self.bdf_arm))

    def day_rows(self) -> list[dict]:
        avg, bdf, reg = self.cumavg(), self.bdf_cumavg(), self.regret()
        return [
            {
                "day": d + 1,
                "theta_deg": self.thetas[self.chosen[d]],
                "profit": self.profits[d],
                "cumavg_profit": float(avg[d]),
                "bdf_mean": float(bdf[d]),
                "regret": float(reg[d]),
            }
            for d in range(self.days)
        ]

    def arm_rows(self) -> list[dict]:
        rows = []
        for h, arm in enumerate(self.state.arms):
            rows.append(
                {
                    "arm": h,
                    "theta_deg": arm.theta,
                    "pulls": arm.pulls,
                    "mean_profit": arm.mean if arm.pulls else float("nan"),
                    "bdf_mean_profit": float(self.bdf_means[h]),
                }
            )
        return rows


def profit_table(
    days: int,
    thetas: Sequence[float],
    day_source,
    demand: DemandModel,
    setup: MarketSetup,
    seed: int,
) -> np.ndarray:
    """Profit of every slope on every day, with paired opt-in draws."""
    table = np.zeros((days, len(thetas)))
    for d in range(days):
        trips = day_source(d)
        ctx = RouteContext(trips, setup.metric, setup.schedule, DiscountPolicy(0.0, 0.0, setup.b))
        u = day_uniforms(len(ctx), _opt_seed(seed, d))
        for h, theta in enumerate(thetas):
            table[d, h] = simulate_day(theta, ctx, demand, setup, uniforms=u)
    return table


def run_learning(
    days: int,
    thetas: Sequence[float] = DEFAULT_THETA_GRID,
    day_source=None,
    demand: DemandModel | None = None,
    setup: MarketSetup | None = None,
    seed: int = 0,
    normalize: bool = False,
    scale: float | None = None,
    n_per_day: int = 40,
) -> LearningReport:
    """Run the learner for ``days`` days against the best-fixed-slope oracle.

    Every slope is simulated on every day with the same opt-in draws; the
    learner sees only the entry of the slope it picks, and the oracle is the
    slope with the best mean over all days.
    """
    thetas = [float(t) for t in thetas]
    if days < len(thetas):
        raise ValueError(f"need at least {len(thetas)} days to try every slope once")
    setup = setup or MarketSetup()
    demand = demand or QuadraticDemand()
    day_source = day_source or synthetic_days(n_per_day, seed)
    table = profit_table(days, thetas, day_source, demand, setup, seed)
    state = BanditState.fresh(thetas, normalize=normalize, scale=scale)
    chosen, profits = [], []
    for d in range(days):
        idx = {t: h for h, t in enumerate(thetas)}
        ucb_step(state, lambda theta: table[d, idx[theta]])
        _, h, p = state.history[-1]
        chosen.append(h)
        profits.append(p)
    return LearningReport(thetas, chosen, profits, table, state)
