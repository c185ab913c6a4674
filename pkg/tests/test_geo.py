"""Geodesy: haversine, spherical centroid, coverage radius, distance reports."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from euigeo.geo import (
    EARTH_RADIUS_KM,
    DegenerateCentroid,
    EmptyInput,
    GeoPoint,
    centroid,
    compare_sources,
    coverage_radius,
    destination,
    geodesic_km,
    write_report_csv,
)

lat_st = st.floats(min_value=-89.9, max_value=89.9)
lon_st = st.floats(min_value=-179.9, max_value=180.0)


def law_of_cosines_km(a: GeoPoint, b: GeoPoint) -> float:
    """Independent great-circle formula for cross-checking."""
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dl = math.radians(b.lon - a.lon)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return EARTH_RADIUS_KM * math.acos(max(-1.0, min(1.0, c)))


class TestGeodesic:
    def test_zero(self):
        p = GeoPoint(48.0, 11.0)
        assert geodesic_km(p, p) == 0.0

    def test_antipodal_on_equator(self):
        d = geodesic_km(GeoPoint(0, 0), GeoPoint(0, 180))
        assert d == pytest.approx(math.pi * EARTH_RADIUS_KM, abs=0.01)
        assert d == pytest.approx(20015.09, abs=0.01)

    def test_city_pair_against_independent_formula(self):
        paris = GeoPoint(48.8566, 2.3522)
        berlin = GeoPoint(52.5200, 13.4050)
        d = geodesic_km(paris, berlin)
        ref = law_of_cosines_km(paris, berlin)
        assert abs(d - ref) / ref < 0.001
        assert 850 < d < 900  # sanity envelope for this pair

    @given(lat_st, lon_st, lat_st, lon_st)
    @settings(max_examples=200)
    def test_symmetry(self, lat1, lon1, lat2, lon2):
        a, b = GeoPoint(lat1, lon1), GeoPoint(lat2, lon2)
        assert abs(geodesic_km(a, b) - geodesic_km(b, a)) < 1e-9

    @given(lat_st, lon_st, lat_st, lon_st, lat_st, lon_st)
    @settings(max_examples=200)
    def test_triangle_inequality(self, lat1, lon1, lat2, lon2, lat3, lon3):
        a, b, c = GeoPoint(lat1, lon1), GeoPoint(lat2, lon2), GeoPoint(lat3, lon3)
        assert geodesic_km(a, c) <= geodesic_km(a, b) + geodesic_km(b, c) + 1e-6


class TestCentroid:
    def test_single_point(self):
        p = GeoPoint(12.5, -33.25)
        c = centroid([p])
        assert c.lat == pytest.approx(p.lat, abs=1e-12)
        assert c.lon == pytest.approx(p.lon, abs=1e-12)

    def test_symmetric_pair(self):
        c = centroid([GeoPoint(10, 20), GeoPoint(-10, 20)])
        assert c.lat == pytest.approx(0.0, abs=1e-12)
        assert c.lon == pytest.approx(20.0, abs=1e-12)

    def test_matches_chord_distance_minimizer(self):
        from scipy.optimize import minimize

        pts = [
            GeoPoint(39.70, -86.20),
            GeoPoint(39.81, -86.10),
            GeoPoint(39.75, -86.05),
            GeoPoint(39.90, -86.25),
            GeoPoint(39.68, -86.12),
        ]

        def chord_sq_sum(x):
            lat, lon = x
            total = 0.0
            for p in pts:
                # squared 3D chord distance between unit vectors
                p1 = np.radians([lat, lon])
                p2 = np.radians([p.lat, p.lon])
                v1 = np.array(
                    [np.cos(p1[0]) * np.cos(p1[1]), np.cos(p1[0]) * np.sin(p1[1]), np.sin(p1[0])]
                )
                v2 = np.array(
                    [np.cos(p2[0]) * np.cos(p2[1]), np.cos(p2[0]) * np.sin(p2[1]), np.sin(p2[0])]
                )
                total += float(np.sum((v1 - v2) ** 2))
            return total

        got = centroid(pts)
        ref = minimize(chord_sq_sum, x0=[39.5, -86.0], method="Nelder-Mead", tol=1e-12).x
        assert got.lat == pytest.approx(ref[0], abs=1e-6)
        assert got.lon == pytest.approx(ref[1], abs=1e-6)

    def test_permutation_and_duplication_invariance(self):
        pts = [GeoPoint(1.0, 2.0), GeoPoint(3.0, 4.0), GeoPoint(-2.0, 1.0)]
        a = centroid(pts)
        b = centroid(list(reversed(pts)))
        c = centroid(pts + pts)
        for other in (b, c):
            assert a.lat == pytest.approx(other.lat, abs=1e-12)
            assert a.lon == pytest.approx(other.lon, abs=1e-12)

    def test_degenerate_antipodal(self):
        with pytest.raises(DegenerateCentroid):
            centroid([GeoPoint(0, 0), GeoPoint(0, 180)])

    def test_empty(self):
        with pytest.raises(EmptyInput):
            centroid([])


class TestCoverageRadius:
    def test_all_at_center(self):
        c = GeoPoint(40.0, -86.0)
        assert coverage_radius([c, c, c], c) == 0.0

    def test_max_distance(self):
        c = GeoPoint(0.0, 0.0)
        pts = [destination(c, 90.0, 5.0), destination(c, 180.0, 12.0)]
        assert coverage_radius(pts, c) == pytest.approx(12.0, abs=1e-9)

    def test_separated_pair_lower_bound(self):
        a = GeoPoint(10.0, 10.0)
        b = GeoPoint(-40.0, 150.0)
        center = centroid([a, b])
        assert coverage_radius([a, b], center) >= geodesic_km(a, b) / 2 - 1e-6

    def test_empty(self):
        with pytest.raises(EmptyInput):
            coverage_radius([], GeoPoint(0, 0))


class TestDestination:
    @given(lat_st, st.floats(min_value=-179.0, max_value=179.0),
           st.floats(min_value=0.0, max_value=359.9),
           st.floats(min_value=0.0, max_value=500.0))
    @settings(max_examples=200)
    def test_distance_is_exact(self, lat, lon, bearing, dist):
        start = GeoPoint(lat, lon)
        end = destination(start, bearing, dist)
        assert geodesic_km(start, end) == pytest.approx(dist, abs=1e-6)


class TestCompareSources:
    def test_identical_maps(self):
        m = {i: GeoPoint(float(i), float(i)) for i in range(10)}
        rep = compare_sources(m, m)
        assert rep.pairs == 10
        assert np.allclose(rep.distances_km, 0.0)
        assert rep.quantiles[0.5] == 0.0

    def test_uniform_displacement_field(self):
        rng = np.random.default_rng(17)
        a = {}
        b = {}
        for i in range(500):
            p = GeoPoint(float(rng.uniform(-60, 60)), float(rng.uniform(-170, 170)))
            a[i] = p
            b[i] = destination(p, float(rng.uniform(0, 360)), 26.0)
        rep = compare_sources(a, b)
        assert rep.quantiles[0.5] == pytest.approx(26.0, abs=0.1)
        assert rep.quantiles[0.9] == pytest.approx(26.0, abs=0.1)

    def test_disjoint_keys(self):
        rep = compare_sources({1: GeoPoint(0, 0)}, {2: GeoPoint(0, 0)})
        assert rep.pairs == 0
        assert rep.distances_km.shape[0] == 0
        assert rep.quantiles == {}

    def test_quantiles_are_order_statistics(self):
        a = {i: GeoPoint(0.0, 0.0) for i in range(7)}
        b = {i: destination(GeoPoint(0.0, 0.0), 90.0, float(i + 1)) for i in range(7)}
        rep = compare_sources(a, b)
        sorted_d = np.sort(rep.distances_km)
        for prob, got in rep.quantiles.items():
            idx = max(0, math.ceil(prob * len(sorted_d)) - 1)
            assert got == float(sorted_d[idx])

    def test_distinct_location_counts(self):
        a = {i: GeoPoint(1.0, 1.0) for i in range(5)}  # one distinct point
        b = {i: GeoPoint(float(i), 0.0) for i in range(5)}
        rep = compare_sources(a, b)
        assert rep.distinct_a == 1
        assert rep.distinct_b == 5

    def test_csv_export(self, tmp_path):
        a = {1: GeoPoint(0, 0), 2: GeoPoint(0, 0)}
        b = {1: destination(GeoPoint(0, 0), 0, 3.0), 2: destination(GeoPoint(0, 0), 0, 1.0)}
        rep = compare_sources(a, b)
        path = tmp_path / "d.csv"
        write_report_csv(rep, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "distance_km"
        values = [float(x) for x in lines[1:]]
        assert values == sorted(values)
        assert len(values) == 2
