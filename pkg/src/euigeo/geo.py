"""Spherical geodesy: distances, centroids, coverage radii, source comparison.

Haversine on the 6371 km mean-radius sphere is used throughout; the
sub-0.5% spherical error is immaterial at the accuracy scales this toolkit
reports (tens of meters to tens of kilometers).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import EARTH_RADIUS_KM, haversine_km_arrays

QUANTILE_PROBS = (0.25, 0.5, 0.75, 0.9)


class EmptyInput(ValueError):
    """Raised when an operation requires at least one point."""


class DegenerateCentroid(ValueError):
    """Raised when points balance out and no meaningful centroid exists."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def validate(self) -> "GeoPoint":
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 < self.lon <= 180.0):
            raise ValueError(f"coordinates out of range: ({self.lat}, {self.lon})")
        return self


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dphi = p2 - p1
    dlam = math.radians(lon2) - math.radians(lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, a)))


def geodesic_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points, in kilometers."""
    return haversine_km(a.lat, a.lon, b.lat, b.lon)


def _unit_vectors(lats: np.ndarray, lons: np.ndarray):
    phi = np.radians(lats)
    lam = np.radians(lons)
    cp = np.cos(phi)
    return np.stack([cp * np.cos(lam), cp * np.sin(lam), np.sin(phi)], axis=1)


def centroid(points) -> GeoPoint:
    """Spherical centroid: normalized mean of unit vectors.

    This is the minimizer of summed squared chord distance on the sphere.
    Raises EmptyInput on no points and DegenerateCentroid when the mean
    vector vanishes (e.g. antipodal balance) - never guesses a location.
    """
    pts = list(points)
    if not pts:
        raise EmptyInput("centroid of no points")
    if len(pts) == 1:
        return pts[0]
    lats = np.array([p.lat for p in pts], dtype=np.float64)
    lons = np.array([p.lon for p in pts], dtype=np.float64)
    mean = _unit_vectors(lats, lons).mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-9:
        raise DegenerateCentroid("mean direction vector vanishes")
    x, y, z = mean / norm
    return GeoPoint(math.degrees(math.asin(max(-1.0, min(1.0, z)))), math.degrees(math.atan2(y, x)))


def coverage_radius(points, center: GeoPoint) -> float:
    """Minimum radius (km) around `center` containing every point."""
    pts = list(points)
    if not pts:
        raise EmptyInput("coverage radius of no points")
    lats = np.array([p.lat for p in pts], dtype=np.float64)
    lons = np.array([p.lon for p in pts], dtype=np.float64)
    d = haversine_km_arrays(
        lats, lons, np.full_like(lats, center.lat), np.full_like(lons, center.lon)
    )
    return float(d.max())


def destination(start: GeoPoint, bearing_deg: float, distance_km: float) -> GeoPoint:
    """Point reached from `start` along an initial bearing for a distance."""
    delta = distance_km / EARTH_RADIUS_KM
    theta = math.radians(bearing_deg)
    phi1 = math.radians(start.lat)
    lam1 = math.radians(start.lon)
    phi2 = math.asin(
        math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta)
    )
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    lon = math.degrees(lam2)
    lon = (lon + 180.0) % 360.0 - 180.0
    if lon == -180.0:
        lon = 180.0
    return GeoPoint(math.degrees(phi2), lon)


# ---------------------------------------------------------------------------
# source comparison reports
# ---------------------------------------------------------------------------

@dataclass
class DistanceReport:
    pairs: int
    distances_km: np.ndarray  # ascending
    quantiles: dict[float, float] = field(default_factory=dict)
    distinct_a: int = 0
    distinct_b: int = 0


def _order_statistic(sorted_values: np.ndarray, prob: float) -> float:
    # inverse-CDF convention: smallest value with CDF >= prob
    n = sorted_values.shape[0]
    idx = max(0, min(n - 1, math.ceil(prob * n) - 1))
    return float(sorted_values[idx])


def compare_sources(a: dict, b: dict) -> DistanceReport:
    """Pairwise distances over the key intersection of two location maps.

    Values are GeoPoint. The report also carries the number of distinct
    coordinates each source assigns, a staleness signal for databases that
    pin many keys to one default location.
    """
    keys = sorted(set(a) & set(b))
    if keys:
        la = np.array([a[k].lat for k in keys])
        lo = np.array([a[k].lon for k in keys])
        lb = np.array([b[k].lat for k in keys])
        lq = np.array([b[k].lon for k in keys])
        dist = np.sort(haversine_km_arrays(la, lo, lb, lq))
    else:
        dist = np.empty(0, dtype=np.float64)
    quant = {}
    if dist.shape[0]:
        quant = {p: _order_statistic(dist, p) for p in QUANTILE_PROBS}
    return DistanceReport(
        pairs=len(keys),
        distances_km=dist,
        quantiles=quant,
        distinct_a=len({(p.lat, p.lon) for p in a.values()}),
        distinct_b=len({(p.lat, p.lon) for p in b.values()}),
    )


def write_report_csv(report: DistanceReport, path) -> None:
    with open(path, "w") as fh:
        fh.write("distance_km\n")
        for d in report.distances_km:
            fh.write(f"{d:.6f}\n")


def report_summary(report: DistanceReport, config: dict | None = None) -> dict:
    out = {
        "pairs": report.pairs,
        "quantiles_km": {str(p): v for p, v in report.quantiles.items()},
        "distinct_locations_a": report.distinct_a,
        "distinct_locations_b": report.distinct_b,
    }
    if config is not None:
        out["config"] = config
    return out


def write_report_summary(report: DistanceReport, path, config: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(report_summary(report, config), fh, indent=2)
        fh.write("\n")
