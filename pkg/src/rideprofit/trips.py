"""Trip requests, grid snapping and travel metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0
KM_PER_MILE = 1.609344
TIME_FORMAT = "%Y-%m-%d %H:%M:%S"
SYNTH_EPOCH = datetime(2013, 1, 1, 19, 0, 0)


class DataError(ValueError):
    """Input data could not be turned into trips or metrics."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not (-90.0 <= self.lat <= 90.0 and -180.0 <= self.lon <= 180.0):
            raise ValueError(f"coordinate out of range ({self.lat}, {self.lon})")


@dataclass(frozen=True)
class TripRequest:
    id: int
    source: GeoPoint
    dest: GeoPoint
    request_time: datetime
    recorded_distance: float | None = None  # km
    recorded_time: float | None = None  # minutes

    def __post_init__(self):
        if self.id < 0:
            raise ValueError("trip id must be non-negative")
        for value in (self.recorded_distance, self.recorded_time):
            if value is not None and not (math.isfinite(value) and value > 0):
                raise ValueError("recorded distance/time must be positive when present")


@dataclass(frozen=True)
class BoundingBox:
    south_west: GeoPoint
    north_east: GeoPoint

    def __post_init__(self):
        if not (self.north_east.lat > self.south_west.lat and self.north_east.lon > self.south_west.lon):
            raise ValueError("bounding box has zero or negative area")

    def clamp(self, p: GeoPoint) -> GeoPoint:
        return GeoPoint(
            min(max(p.lat, self.south_west.lat), self.north_east.lat),
            min(max(p.lon, self.south_west.lon), self.north_east.lon),
        )

    def contains(self, p: GeoPoint) -> bool:
        return (
            self.south_west.lat <= p.lat <= self.north_east.lat
            and self.south_west.lon <= p.lon <= self.north_east.lon
        )


# Midtown/lower Manhattan, roughly 11 km x 7.6 km.
NYC_BOX = BoundingBox(GeoPoint(40.70, -74.02), GeoPoint(40.80, -73.93))


# ---------------------------------------------------------------------------
# landmark grid


@dataclass(frozen=True)
class LandmarkGrid:
    """Square cells of ``cell_size_m`` metres laid over ``box``.

    Cells are half-open: the south and west edges belong to the cell. Metres
    per degree of longitude are taken at the box's mid latitude.
    """

    cell_size_m: float
    box: BoundingBox

    def __post_init__(self):
        if not self.cell_size_m > 0:
            raise ValueError("cell_size_m must be positive")

    @property
    def _m_per_deg_lat(self) -> float:
        return EARTH_RADIUS_KM * 1000.0 * math.pi / 180.0

    @property
    def _m_per_deg_lon(self) -> float:
        mid = 0.5 * (self.box.south_west.lat + self.box.north_east.lat)
        return self._m_per_deg_lat * math.cos(math.radians(mid))

    def cell_of(self, point: GeoPoint) -> tuple[int, int]:
        p = self.box.clamp(point)
        dy = (p.lat - self.box.south_west.lat) * self._m_per_deg_lat
        dx = (p.lon - self.box.south_west.lon) * self._m_per_deg_lon
        return math.floor(dy / self.cell_size_m), math.floor(dx / self.cell_size_m)

    def centroid(self, cell: tuple[int, int]) -> GeoPoint:
        row, col = cell
        lat = self.box.south_west.lat + (row + 0.5) * self.cell_size_m / self._m_per_deg_lat
        lon = self.box.south_west.lon + (col + 0.5) * self.cell_size_m / self._m_per_deg_lon
        return GeoPoint(lat, lon)


def snap(point: GeoPoint, grid: LandmarkGrid) -> GeoPoint:
    """Centroid of the grid cell containing ``point`` (clamped into the box)."""
    return grid.centroid(grid.cell_of(point))


# ---------------------------------------------------------------------------
# travel metrics


class TravelMetric:
    """Driving distance (km) and time (minutes) between two points.

    Subclasses implement :meth:`dist` and :meth:`time`; :meth:`matrices` is
    overridden where a vectorised form exists. Instances are read-only after
    construction.
    """

    def dist(self, u: GeoPoint, v: GeoPoint) -> float:
        raise NotImplementedError

    def time(self, u: GeoPoint, v: GeoPoint) -> float:
        raise NotImplementedError

    def matrices(self, points: Sequence[GeoPoint]) -> tuple[np.ndarray, np.ndarray]:
        n = len(points)
        dm = np.zeros((n, n))
        tm = np.zeros((n, n))
        for a in range(n):
            for b in range(n):
                if a != b:
                    dm[a, b] = self.dist(points[a], points[b])
                    tm[a, b] = self.time(points[a], points[b])
        return dm, tm


def great_circle_km(u: GeoPoint, v: GeoPoint) -> float:
    lat1, lat2 = math.radians(u.lat), math.radians(v.lat)
    dlat = lat2 - lat1
    dlon = math.radians(v.lon - u.lon)
    a = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


class HaversineMetric(TravelMetric):
    def __init__(self, speed_kmh: float = 18.0, circuity: float = 1.3):
        if not speed_kmh > 0:
            raise ValueError("speed_kmh must be positive")
        if not circuity >= 1:
            raise ValueError("circuity must be >= 1")
        self.speed_kmh = float(speed_kmh)
        self.circuity = float(circuity)

    def dist(self, u: GeoPoint, v: GeoPoint) -> float:
        return self.circuity * great_circle_km(u, v)

    def time(self, u: GeoPoint, v: GeoPoint) -> float:
        return self.dist(u, v) / self.speed_kmh * 60.0

    def matrices(self, points):
        lat = np.radians([p.lat for p in points])
        lon = np.radians([p.lon for p in points])
        dlat = lat[None, :] - lat[:, None]
        dlon = lon[None, :] - lon[:, None]
        a = np.sin(dlat / 2) ** 2 + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dlon / 2) ** 2
        dm = self.circuity * (2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(a))))
        np.fill_diagonal(dm, 0.0)
        tm = dm / self.speed_kmh * 60.0
        return dm, tm


def haversine_metric(speed_kmh: float = 18.0, circuity: float = 1.3) -> HaversineMetric:
    return HaversineMetric(speed_kmh, circuity)


class MatrixMetric(TravelMetric):
    """Lookup in precomputed label-to-label matrices.

    Query points go to their nearest label by great-circle distance; an exact
    tie goes to the lower label index.
    """

    def __init__(self, labels: Sequence[str], points: Sequence[GeoPoint], dist_km, time_min):
        dm = np.array(dist_km, dtype=float)
        tm = np.array(time_min, dtype=float)
        m = len(points)
        if dm.ndim != 2 or dm.shape[0] != dm.shape[1] or tm.ndim != 2 or tm.shape[0] != tm.shape[1]:
            raise DataError("distance and time matrices must be square")
        if dm.shape != (m, m) or tm.shape != (m, m):
            raise DataError(f"matrix dimension does not match {m} labelled points")
        if not (np.all(np.isfinite(dm)) and np.all(np.isfinite(tm))):
            raise DataError("matrix entries must be finite")
        if (dm < 0).any() or (tm < 0).any():
            raise DataError("matrix entries must be non-negative")
        np.fill_diagonal(dm, 0.0)
        np.fill_diagonal(tm, 0.0)
        dm.setflags(write=False)
        tm.setflags(write=False)
        self.labels = list(labels)
        self.points = list(points)
        self.dist_km = dm
        self.time_min = tm
        self._lat = np.radians([p.lat for p in points])
        self._lon = np.radians([p.lon for p in points])

    def nearest(self, p: GeoPoint) -> int:
        lat, lon = math.radians(p.lat), math.radians(p.lon)
        a = np.sin((self._lat - lat) / 2) ** 2 + np.cos(lat) * np.cos(self._lat) * np.sin((self._lon - lon) / 2) ** 2
        return int(np.argmin(a))

    def dist(self, u, v):
        return float(self.dist_km[self.nearest(u), self.nearest(v)])

    def time(self, u, v):
        return float(self.time_min[self.nearest(u), self.nearest(v)])

    def matrices(self, points):
        idx = np.array([self.nearest(p) for p in points], dtype=np.int64)
        return self.dist_km[np.ix_(idx, idx)].copy(), self.time_min[np.ix_(idx, idx)].copy()


def matrix_metric(path) -> MatrixMetric:
    """Read a matrix metric file.

    Layout (whitespace separated): point count ``m``; ``m`` lines
    ``label lat lon``; ``m`` rows of km; ``m`` rows of minutes.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    lines = [ln.split() for ln in path.read_text().splitlines() if ln.strip()]
    try:
        m = int(lines[0][0])
        labels, points = [], []
        for row in lines[1 : 1 + m]:
            labels.append(row[0])
            points.append(GeoPoint(float(row[1]), float(row[2])))
        dist = [[float(x) for x in row] for row in lines[1 + m : 1 + 2 * m]]
        time = [[float(x) for x in row] for row in lines[1 + 2 * m : 1 + 3 * m]]
    except (IndexError, ValueError) as exc:
        raise DataError(f"malformed matrix file {path}: {exc}") from exc
    if len(labels) != m or len(dist) != m or len(time) != m:
        raise DataError(f"matrix file {path} is truncated")
    if any(len(r) != m for r in dist + time):
        raise DataError("distance and time matrices must be square")
    return MatrixMetric(labels, points, dist, time)


def write_matrix_metric(path, labels, points, dist_km, time_min) -> None:
    m = len(points)
    out = [str(m)]
    out += [f"{lab} {p.lat!r} {p.lon!r}" for lab, p in zip(labels, points)]
    out += [" ".join(repr(float(x)) for x in row) for row in np.asarray(dist_km)]
    out += [" ".join(repr(float(x)) for x in row) for row in np.asarray(time_min)]
    Path(path).write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# CSV ingestion


@dataclass(frozen=True)
class TripSchema:
    """Column names of a trip CSV plus unit factors to km and minutes."""

    pickup_time: str = "pickup_datetime"
    pickup_lat: str = "pickup_latitude"
    pickup_lon: str = "pickup_longitude"
    dropoff_lat: str = "dropoff_latitude"
    dropoff_lon: str = "dropoff_longitude"
    distance: str | None = "trip_distance"
    duration: str | None = "trip_time_in_secs"
    distance_to_km: float = KM_PER_MILE
    duration_to_min: float = 1.0 / 60.0

    def required(self) -> list[str]:
        return [self.pickup_time, self.pickup_lat, self.pickup_lon, self.dropoff_lat, self.dropoff_lon]


NYC_2013 = TripSchema()


class TripLoad(NamedTuple):
    trips: list[TripRequest]
    skipped: int


def _optional_positive(row, col, scale):
    if col is None or col not in row:
        return None
    raw = (row[col] or "").strip()
    if not raw:
        return None
    value = float(raw) * scale
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{col} must be positive")
    return value


def load_trips(path, schema: TripSchema = NYC_2013, grid: LandmarkGrid | None = None) -> TripLoad:
    """Read trips from a CSV.

    Rows that fail to parse, fall outside coordinate ranges, carry
    non-positive recorded fields, or whose pickup equals the dropoff (after
    snapping, when ``grid`` is given) are skipped and counted. Ids follow the
    order of the accepted rows. Lines starting with ``#`` are ignored. A file
    with rows but none valid is an error; a header-only file yields no trips.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    trips: list[TripRequest] = []
    skipped = 0
    with path.open(newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        header = reader.fieldnames or []
        missing = [c for c in schema.required() if c not in header]
        if missing:
            raise DataError(f"missing column(s) {missing} in {path}")
        for row in reader:
            try:
                src = GeoPoint(float(row[schema.pickup_lat]), float(row[schema.pickup_lon]))
                dst = GeoPoint(float(row[schema.dropoff_lat]), float(row[schema.dropoff_lon]))
                when = datetime.strptime(row[schema.pickup_time].strip(), TIME_FORMAT)
                rec_d = _optional_positive(row, schema.distance, schema.distance_to_km)
                rec_t = _optional_positive(row, schema.duration, schema.duration_to_min)
            except (TypeError, ValueError, AttributeError):
                skipped += 1
                continue
            if grid is not None:
                src, dst = snap(src, grid), snap(dst, grid)
            if src == dst:
                skipped += 1
                continue
            trips.append(TripRequest(len(trips), src, dst, when, rec_d, rec_t))
    if not trips and skipped:
        raise DataError(f"no valid trip rows in {path} ({skipped} skipped)")
    return TripLoad(trips, skipped)


def write_trips(path, trips: Sequence[TripRequest], schema: TripSchema = NYC_2013) -> None:
    cols = schema.required()
    if schema.distance:
        cols.append(schema.distance)
    if schema.duration:
        cols.append(schema.duration)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for t in trips:
            row = [
                t.request_time.strftime(TIME_FORMAT),
                repr(t.source.lat),
                repr(t.source.lon),
                repr(t.dest.lat),
                repr(t.dest.lon),
            ]
            if schema.distance:
                row.append("" if t.recorded_distance is None else repr(t.recorded_distance / schema.distance_to_km))
            if schema.duration:
                row.append("" if t.recorded_time is None else repr(t.recorded_time / schema.duration_to_min))
            w.writerow(row)


# ---------------------------------------------------------------------------
# synthetic trips


def synth_generate(
    n: int,
    seed: int,
    box: BoundingBox = NYC_BOX,
    horizon: float = 60.0,
    metric: TravelMetric | None = None,
) -> list[TripRequest]:
    """``n`` trips with endpoints uniform in ``box`` and request times uniform
    over ``horizon`` minutes. ``metric``, when given, fills the recorded
    distance/time fields."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    sw, ne = box.south_west, box.north_east
    lat = rng.uniform(sw.lat, ne.lat, size=(n, 2))
    lon = rng.uniform(sw.lon, ne.lon, size=(n, 2))
    secs = np.sort(rng.integers(0, int(round(horizon * 60)), size=n, endpoint=False))
    trips = []
    for i in range(n):
        src = GeoPoint(float(lat[i, 0]), float(lon[i, 0]))
        dst = GeoPoint(float(lat[i, 1]), float(lon[i, 1]))
        rd = rt = None
        if metric is not None:
            rd, rt = metric.dist(src, dst), metric.time(src, dst)
        trips.append(TripRequest(i, src, dst, SYNTH_EPOCH + timedelta(seconds=int(secs[i])), rd, rt))
    return trips
