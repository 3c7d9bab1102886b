import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rideprofit.trips import (
    NYC_BOX,
    BoundingBox,
    DataError,
    GeoPoint,
    LandmarkGrid,
    MatrixMetric,
    TripRequest,
    haversine_metric,
    load_trips,
    matrix_metric,
    snap,
    synth_generate,
    write_matrix_metric,
    write_trips,
)

HEADER = "pickup_datetime,pickup_latitude,pickup_longitude,dropoff_latitude,dropoff_longitude,trip_distance,trip_time_in_secs\n"


def write(tmp_path, body, name="trips.csv"):
    p = tmp_path / name
    p.write_text(HEADER + body)
    return p


def cosine_law_km(u, v, radius=6371.0):
    # independent of the haversine form used by the package
    a, b = math.radians(u.lat), math.radians(v.lat)
    c = math.cos(a) * math.cos(b) * math.cos(math.radians(v.lon - u.lon)) + math.sin(a) * math.sin(b)
    return radius * math.acos(max(-1.0, min(1.0, c)))


# -- types -------------------------------------------------------------------


@pytest.mark.parametrize("lat,lon", [(91, 0), (-90.5, 0), (0, 181), (float("nan"), 0), (0, float("inf"))])
def test_geopoint_rejects_out_of_range(lat, lon):
    with pytest.raises(ValueError):
        GeoPoint(lat, lon)


def test_trip_request_invariants():
    p, q = GeoPoint(40.7, -74.0), GeoPoint(40.71, -74.0)
    with pytest.raises(ValueError):
        TripRequest(-1, p, q, None)
    with pytest.raises(ValueError):
        TripRequest(0, p, q, None, recorded_distance=0.0)


def test_degenerate_box_rejected():
    with pytest.raises(ValueError):
        BoundingBox(GeoPoint(40.7, -74.0), GeoPoint(40.7, -73.9))


# -- load_trips ----------------------------------------------------------------


def test_header_only_file_gives_empty_list(tmp_path):
    loaded = load_trips(write(tmp_path, ""))
    assert loaded.trips == [] and loaded.skipped == 0


def test_row_with_pickup_equal_dropoff_is_skipped(tmp_path):
    body = (
        "2013-01-01 08:00:00,40.75,-73.99,40.73,-73.98,1.2,300\n"
        "2013-01-01 08:01:00,40.76,-73.97,40.76,-73.97,0.5,120\n"
        "2013-01-01 08:02:00,40.72,-74.00,40.78,-73.95,3.0,900\n"
    )
    loaded = load_trips(write(tmp_path, body))
    assert [t.id for t in loaded.trips] == [0, 1]
    assert loaded.skipped == 1
    assert loaded.trips[1].source == GeoPoint(40.72, -74.00)


def test_nyc_row_passes_fields_through(tmp_path):
    loaded = load_trips(write(tmp_path, "2013-01-01 08:00:00,40.75,-73.99,40.73,-73.98,2.0,600\n"))
    (t,) = loaded.trips
    assert t.source == GeoPoint(40.75, -73.99)
    assert t.dest == GeoPoint(40.73, -73.98)
    assert t.request_time.strftime("%H:%M:%S") == "08:00:00"
    assert t.recorded_distance == pytest.approx(2.0 * 1.609344)
    assert t.recorded_time == pytest.approx(10.0)


def test_missing_file_and_missing_column(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_trips(tmp_path / "nope.csv")
    p = tmp_path / "bad.csv"
    p.write_text("pickup_datetime,pickup_latitude\n2013-01-01 08:00:00,40.7\n")
    with pytest.raises(DataError, match="missing column"):
        load_trips(p)


def test_zero_valid_rows_is_an_error(tmp_path):
    body = "not-a-date,40.75,-73.99,40.73,-73.98,1,1\n2013-01-01 08:00:00,abc,-73.99,40.73,-73.98,1,1\n"
    with pytest.raises(DataError, match="no valid"):
        load_trips(write(tmp_path, body))


def test_rows_plus_skips_equals_input_rows(tmp_path):
    rng = np.random.default_rng(3)
    lines, n_rows = [], 40
    for i in range(n_rows):
        kind = rng.integers(4)
        if kind == 0:
            lines.append("garbage,1,2,3,4,5,6")
        elif kind == 1:
            lines.append("2013-01-01 08:00:00,40.75,-73.99,40.75,-73.99,1,60")
        elif kind == 2:
            lines.append("2013-01-01 08:00:00,40.75,-73.99,40.74,-73.98,-1,60")
        else:
            lines.append(f"2013-01-01 08:00:00,40.75,-73.99,40.7{i % 9},-73.98,,")
    loaded = load_trips(write(tmp_path, "\n".join(lines) + "\n"))
    assert len(loaded.trips) + loaded.skipped == n_rows


def test_snapping_can_merge_endpoints(tmp_path):
    grid = LandmarkGrid(500.0, NYC_BOX)
    body = "2013-01-01 08:00:00,40.75000,-73.99000,40.75001,-73.99001,0.1,30\n"
    p = write(tmp_path, body + "2013-01-01 08:00:00,40.71,-74.01,40.79,-73.94,5,900\n")
    loaded = load_trips(p, grid=grid)
    assert len(loaded.trips) == 1 and loaded.skipped == 1


def test_generated_file_round_trips(tmp_path):
    trips = synth_generate(50, seed=4, metric=haversine_metric())
    p = tmp_path / "gen.csv"
    write_trips(p, trips)
    loaded = load_trips(p)
    assert loaded.skipped == 0
    assert [(t.source, t.dest, t.request_time) for t in loaded.trips] == [
        (t.source, t.dest, t.request_time) for t in trips
    ]
    for a, b in zip(loaded.trips, trips):
        assert a.recorded_distance == pytest.approx(b.recorded_distance, rel=1e-12)


# -- snap ----------------------------------------------------------------------


GRID = LandmarkGrid(100.0, NYC_BOX)


def test_centroid_is_fixed_point():
    c = GRID.centroid((12, 30))
    assert snap(c, GRID) == c


def test_points_in_one_cell_share_output():
    c = GRID.centroid((5, 7))
    nudged = GeoPoint(c.lat + 1e-5, c.lon - 1e-5)  # ~1 m away
    assert snap(nudged, GRID) == snap(c, GRID)


def test_cell_corner_belongs_to_north_east_cell():
    # the south-west corner of cell (3, 4) is inside cell (3, 4), not (2, 3)
    lat = NYC_BOX.south_west.lat + 3 * 100.0 / GRID._m_per_deg_lat
    lon = NYC_BOX.south_west.lon + 4 * 100.0 / GRID._m_per_deg_lon
    expected_row = math.floor((lat - NYC_BOX.south_west.lat) * GRID._m_per_deg_lat / 100.0)
    expected_col = math.floor((lon - NYC_BOX.south_west.lon) * GRID._m_per_deg_lon / 100.0)
    assert GRID.cell_of(GeoPoint(lat, lon)) == (expected_row, expected_col)
    assert GRID.cell_of(NYC_BOX.south_west) == (0, 0)


def test_non_positive_cell_size():
    with pytest.raises(ValueError):
        LandmarkGrid(0.0, NYC_BOX)


@settings(max_examples=200, deadline=None)
@given(st.floats(40.70, 40.80), st.floats(-74.02, -73.93), st.sampled_from([50.0, 100.0, 333.0]))
def test_snap_idempotent_and_near(lat, lon, cell):
    grid = LandmarkGrid(cell, NYC_BOX)
    p = GeoPoint(lat, lon)
    s = snap(p, grid)
    assert snap(s, grid) == s
    # centroid lies within half a cell diagonal (plus slack for the flat-earth grid)
    assert cosine_law_km(p, s) * 1000 <= cell * math.sqrt(2) / 2 * 1.01 + 1e-6


# -- metrics -------------------------------------------------------------------


def test_haversine_identity_and_degree_length():
    m = haversine_metric(circuity=1.0)
    p = GeoPoint(40.7, -74.0)
    assert m.dist(p, p) == 0 and m.time(p, p) == 0
    assert m.dist(GeoPoint(0, 0), GeoPoint(0, 1)) == pytest.approx(6371.0 * math.pi / 180, abs=1e-9)
    assert m.dist(GeoPoint(0, 0), GeoPoint(0, 1)) == pytest.approx(111.19, abs=0.005)


def test_circuity_scales_linearly():
    u, v = GeoPoint(40.71, -74.0), GeoPoint(40.78, -73.95)
    a, b = haversine_metric(18, 1.0), haversine_metric(18, 1.3)
    assert b.dist(u, v) == pytest.approx(1.3 * a.dist(u, v), rel=1e-14)
    assert b.time(u, v) == pytest.approx(1.3 * a.time(u, v), rel=1e-14)
    assert a.time(u, v) == pytest.approx(a.dist(u, v) / 18 * 60, rel=1e-14)


def test_haversine_precondition():
    with pytest.raises(ValueError):
        haversine_metric(speed_kmh=0)
    with pytest.raises(ValueError):
        haversine_metric(circuity=0.9)


def test_vectorised_matrices_match_scalar_and_cosine_law():
    trips = synth_generate(30, seed=2)
    pts = [t.source for t in trips] + [t.dest for t in trips]
    m = haversine_metric()
    dm, tm = m.matrices(pts)
    for a in range(0, 60, 7):
        for b in range(0, 60, 5):
            assert dm[a, b] == pytest.approx(m.dist(pts[a], pts[b]), rel=1e-12, abs=1e-12)
            assert tm[a, b] == pytest.approx(m.time(pts[a], pts[b]), rel=1e-12, abs=1e-12)
            if a != b:
                assert dm[a, b] == pytest.approx(1.3 * cosine_law_km(pts[a], pts[b]), rel=1e-6)
    assert np.all(np.diag(dm) == 0) and np.all(dm >= 0) and np.all(np.isfinite(tm))


def test_matrix_metric_single_point(tmp_path):
    p = tmp_path / "m.txt"
    write_matrix_metric(p, ["a"], [GeoPoint(40.7, -74.0)], [[3.0]], [[9.0]])
    m = matrix_metric(p)
    assert m.dist(GeoPoint(40.75, -73.9), GeoPoint(40.71, -74.0)) == 0
    assert m.time(GeoPoint(40.75, -73.9), GeoPoint(40.71, -74.0)) == 0


def test_matrix_metric_asymmetry_and_nearest(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("2\nA 40.70 -74.00\nB 40.80 -73.90\n0 5\n7 0\n0 11\n13 0\n")
    m = matrix_metric(p)
    a, b = GeoPoint(40.70, -74.00), GeoPoint(40.80, -73.90)
    assert m.dist(a, b) == 5 and m.dist(b, a) == 7
    assert m.time(a, b) == 11 and m.time(b, a) == 13
    near_b = GeoPoint(40.78, -73.91)
    assert m.nearest(near_b) == 1
    assert m.dist(a, near_b) == 5


def test_matrix_metric_tie_goes_to_lower_label():
    m = MatrixMetric(["a", "b"], [GeoPoint(0, -1), GeoPoint(0, 1)], [[0, 1], [1, 0]], [[0, 1], [1, 0]])
    assert m.nearest(GeoPoint(0, 0)) == 0


def test_matrix_metric_diagonal_forced_to_zero():
    m = MatrixMetric(["a", "b"], [GeoPoint(0, 0), GeoPoint(0, 1)], [[4, 1], [1, 4]], [[4, 1], [1, 4]])
    assert m.dist(GeoPoint(0, 0), GeoPoint(0, 0)) == 0


@pytest.mark.parametrize(
    "text",
    [
        "2\nA 0 0\nB 0 1\n0 5 1\n7 0 1\n0 1\n1 0\n",  # not square
        "2\nA 0 0\nB 0 1\n0 -5\n7 0\n0 1\n1 0\n",  # negative
        "3\nA 0 0\nB 0 1\nC 0 2\n0 1\n1 0\n0 1\n1 0\n",  # truncated
        "x\n",
    ],
)
def test_matrix_metric_rejects_bad_files(tmp_path, text):
    p = tmp_path / "m.txt"
    p.write_text(text)
    with pytest.raises(DataError):
        matrix_metric(p)


# -- synthetic -----------------------------------------------------------------


def test_synth_deterministic_and_sized():
    assert synth_generate(25, seed=9) == synth_generate(25, seed=9)
    assert synth_generate(25, seed=9) != synth_generate(25, seed=10)
    assert len(synth_generate(1, seed=0)) == 1
    with pytest.raises(ValueError):
        synth_generate(0, seed=0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_synth_points_inside_box(seed):
    trips = synth_generate(1000, seed)
    assert all(NYC_BOX.contains(t.source) and NYC_BOX.contains(t.dest) for t in trips)
    times = [t.request_time for t in trips]
    assert times == sorted(times)
    assert (times[-1] - times[0]).total_seconds() < 3600
