"""Profit-maximizing ride matching with detour-based discounts."""

from ._accel import backend
from .matching import (
    MatchResult,
    brute_force_partitions,
    exact_partition_dp,
    greedy_max_profit,
    greedy_order,
    pairwise_blossom,
)
from .pricing import CostSchedule, DiscountPolicy
from .routing import RouteContext, RoutePlan, best_route
from .trips import GeoPoint, TripRequest, haversine_metric, load_trips, synth_generate

__all__ = [
    "CostSchedule",
    "DiscountPolicy",
    "GeoPoint",
    "MatchResult",
    "RouteContext",
    "RoutePlan",
    "TripRequest",
    "backend",
    "best_route",
    "brute_force_partitions",
    "exact_partition_dp",
    "greedy_max_profit",
    "greedy_order",
    "haversine_metric",
    "load_trips",
    "pairwise_blossom",
    "synth_generate",
]
