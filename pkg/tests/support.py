"""Shared fixtures for the test modules."""

from datetime import datetime

from rideprofit.trips import GeoPoint, TravelMetric, TripRequest

T0 = datetime(2013, 1, 1, 8, 0, 0)


class LineMetric(TravelMetric):
    """Points on a line at ``lon = x`` (lat 0); unit speed, so time equals distance."""

    def dist(self, u, v):
        return abs(u.lon - v.lon)

    def time(self, u, v):
        return abs(u.lon - v.lon)


def line_trip(tid: int, src: float, dst: float) -> TripRequest:
    return TripRequest(tid, GeoPoint(0.0, src), GeoPoint(0.0, dst), T0)


def nyc_trip(tid: int, src, dst) -> TripRequest:
    return TripRequest(tid, GeoPoint(*src), GeoPoint(*dst), T0)
