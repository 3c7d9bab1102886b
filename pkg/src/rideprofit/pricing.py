"""Fares, driver pay and provider profit under detour-based discounts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class CostSchedule:
    """Fare parameters. ``f_d`` is the provider's cut of the driver fare."""

    c_b: float = 2.50  # $ per ride
    c_d: float = 1.10  # $ per km
    c_t: float = 0.35  # $ per minute
    f_d: float = 0.20

    def __post_init__(self):
        if min(self.c_b, self.c_d, self.c_t, self.f_d) < 0:
            raise ValueError("cost parameters must be non-negative")
        if not self.f_d < 1:
            raise ValueError("f_d must be < 1")

    def fare_base(self, dist: float, time: float) -> float:
        return self.c_b + self.c_d * dist + self.c_t * time

    def scaled(self, lam: float) -> "CostSchedule":
        return CostSchedule(self.c_b * lam, self.c_d * lam, self.c_t * lam, self.f_d)


@dataclass(frozen=True)
class DiscountPolicy:
    """Linear detour discount ``tan(theta_dist)*delta + tan(theta_time)*tau + b``."""

    theta_dist: float = 40.0  # degrees
    theta_time: float = 0.0  # degrees
    b: float = 0.10

    def __post_init__(self):
        for name in ("theta_dist", "theta_time"):
            v = getattr(self, name)
            if not 0.0 <= v < 90.0:
                raise ValueError(f"{name} must lie in [0, 90) degrees, got {v}")
        if not 0.0 <= self.b < 1.0:
            raise ValueError("b must lie in [0, 1)")

    @property
    def tan_dist(self) -> float:
        return math.tan(math.radians(self.theta_dist))

    @property
    def tan_time(self) -> float:
        return math.tan(math.radians(self.theta_time))


@dataclass
class RideEconomics:
    fares: dict[int, float] = field(default_factory=dict)
    earnings: float = 0.0
    profit: float = 0.0


def discount(policy: DiscountPolicy, delta: float, tau: float = 0.0) -> float:
    raw = policy.tan_dist * delta + policy.tan_time * tau + policy.b
    return min(1.0, max(0.0, raw))


def user_cost(
    schedule: CostSchedule,
    policy: DiscountPolicy,
    solo_dist: float,
    solo_time: float,
    delta: float,
    tau: float,
) -> float:
    """Discounted fare; the base is always the solo trip, never the detoured one."""
    return (1.0 - discount(policy, delta, tau)) * schedule.fare_base(solo_dist, solo_time)


def driver_earnings(schedule: CostSchedule, route_dist: float, route_time: float, active: bool = True) -> float:
    if not active:
        return 0.0
    return (1.0 - schedule.f_d) * schedule.fare_base(route_dist, route_time)


def cab_profit(schedule: CostSchedule, policy: DiscountPolicy, plan) -> RideEconomics:
    """Economics of one cab following ``plan`` (a :class:`routing.RoutePlan`)."""
    if plan is None or not plan.users:
        return RideEconomics()
    fares = {
        u: user_cost(schedule, policy, plan.solo_dist[u], plan.solo_time[u], plan.delta[u], plan.tau[u])
        for u in plan.users
    }
    earn = driver_earnings(schedule, plan.total_dist, plan.total_time, active=True)
    paid = 0.0
    for u in plan.users:
        paid += fares[u]
    return RideEconomics(fares, earn, paid - earn)


def solo_profit(schedule: CostSchedule, policy: DiscountPolicy, dist: float, time: float) -> float:
    """Profit of a lone rider: ``(f_d - b) * fare_base`` when ``b`` is in [0, 1]."""
    return (1.0 - policy.b) * schedule.fare_base(dist, time) - driver_earnings(schedule, dist, time)


def incremental_profit(schedule: CostSchedule, policy: DiscountPolicy, plan_j, plan_k, merged_plan) -> float:
    """Profit change from folding cabs ``j`` and ``k`` into ``merged_plan``."""
    uj = set(plan_j.users) if plan_j is not None else set()
    uk = set(plan_k.users) if plan_k is not None else set()
    if uj & uk:
        raise ValueError(f"cabs overlap on users {sorted(uj & uk)}")
    if set(merged_plan.users) != uj | uk:
        raise ValueError("merged plan must serve exactly the union of both cabs")
    return (
        cab_profit(schedule, policy, merged_plan).profit
        - cab_profit(schedule, policy, plan_j).profit
        - cab_profit(schedule, policy, plan_k).profit
    )
