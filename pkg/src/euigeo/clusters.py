"""Group geolocated CPE by penultimate provider router and derive coverage.

Where the direct WAN-to-BSSID join fails (no EUI-64, unknown offset,
missing wardriving data), a target still inherits a coarse location from
the cluster of geolocated CPE behind the same provider router, or from
geolocated CPE sharing its /48. A dispersion flag marks clusters whose
radius exceeds the physical last-mile bound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .fusion import GeolocatedCpe, cpe_to_dict
from .geo import DistanceReport, GeoPoint, centroid, compare_sources, coverage_radius, destination
from .macaddr import format_ipv6, parse_ipv6

DISPERSION_THRESHOLD_KM = 160.0  # DOCSIS max CMTS-to-modem separation


@dataclass(frozen=True)
class TraceRecord:
    target: int
    hops: tuple[int, ...]
    responded: bool

    @classmethod
    def from_dict(cls, obj: dict) -> "TraceRecord":
        return cls(
            target=parse_ipv6(obj["target"]),
            hops=tuple(parse_ipv6(h) for h in obj.get("hops", [])),
            responded=bool(obj.get("responded", False)),
        )

    def to_dict(self) -> dict:
        return {
            "target": format_ipv6(self.target),
            "hops": [format_ipv6(h) for h in self.hops],
            "responded": self.responded,
        }


@dataclass(frozen=True)
class RouterCluster:
    penultimate: int
    members: tuple[GeolocatedCpe, ...]
    center: GeoPoint
    radius_km: float
    dispersed: bool


@dataclass(frozen=True)
class InferredLocation:
    target: int
    center: GeoPoint
    radius_km: float
    support: int
    method: str  # "cluster" | "prefix48"


def extract_penultimate(trace: TraceRecord) -> int | None:
    """Hop immediately before the responding CPE; None when undefined."""
    if not trace.responded or len(trace.hops) < 2:
        return None
    return trace.hops[-2]


def build_clusters(
    traces,
    geos,
    threshold_km: float = DISPERSION_THRESHOLD_KM,
) -> list[RouterCluster]:
    """One cluster per penultimate hop with at least one geolocated member.

    Geolocated CPE are joined to traces by target address. Clusters are
    returned in ascending penultimate-address order.
    """
    by_addr = {}
    for g in geos:
        by_addr.setdefault(g.source_addr, g)
    groups: dict[int, list[GeolocatedCpe]] = {}
    for tr in traces:
        pen = extract_penultimate(tr)
        if pen is None:
            continue
        g = by_addr.get(tr.target)
        if g is None:
            continue
        groups.setdefault(pen, []).append(g)
    clusters = []
    for pen in sorted(groups):
        members = groups[pen]
        pts = [GeoPoint(m.lat, m.lon) for m in members]
        center = centroid(pts)
        radius = coverage_radius(pts, center)
        clusters.append(
            RouterCluster(
                penultimate=pen,
                members=tuple(members),
                center=center,
                radius_km=radius,
                dispersed=radius > threshold_km,
            )
        )
    return clusters


def _prefix_key(addr: int, prefix_len: int) -> int:
    return addr >> (128 - prefix_len)


def infer_noneui_location(
    target: int,
    clusters,
    traces,
    prefix_len: int = 48,
) -> InferredLocation | None:
    """Locate a target by shared provider router, else by shared prefix.

    The penultimate hop is the physical signal and wins when available;
    the /48 fallback covers targets without a usable trace.
    """
    by_target = {t.target: t for t in traces}
    tr = by_target.get(target)
    if tr is not None:
        pen = extract_penultimate(tr)
        if pen is not None:
            for cl in clusters:
                if cl.penultimate == pen:
                    return InferredLocation(
                        target=target,
                        center=cl.center,
                        radius_km=cl.radius_km,
                        support=len(cl.members),
                        method="cluster",
                    )
    key = _prefix_key(target, prefix_len)
    support = [
        m
        for cl in clusters
        for m in cl.members
        if _prefix_key(m.source_addr, prefix_len) == key
    ]
    if not support:
        return None
    pts = [GeoPoint(m.lat, m.lon) for m in support]
    center = centroid(pts)
    return InferredLocation(
        target=target,
        center=center,
        radius_km=coverage_radius(pts, center),
        support=len(support),
        method="prefix48",
    )


def coverage_gain(total_cpe: int, directly_geolocated: int) -> float:
    """How many CPE become locatable per directly geolocated CPE."""
    if directly_geolocated < 1:
        raise ValueError("directly_geolocated must be >= 1")
    if total_cpe < directly_geolocated:
        raise ValueError("total_cpe must be >= directly_geolocated")
    return round(total_cpe / directly_geolocated, 2)


def evaluate_against_reported(inferred, reported: dict) -> DistanceReport:
    """Distance report between inferred centroids and reported locations."""
    ours = {loc.target: loc.center for loc in inferred}
    return compare_sources(ours, reported)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def read_traces_jsonl(path) -> list[TraceRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(TraceRecord.from_dict(json.loads(line)))
    return out


def write_traces_jsonl(traces, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tr in traces:
            fh.write(json.dumps(tr.to_dict()) + "\n")


def _circle_ring(center: GeoPoint, radius_km: float, segments: int = 64) -> list[list[float]]:
    if radius_km <= 0:
        radius_km = 1e-6
    ring = []
    for i in range(segments + 1):
        p = destination(center, 360.0 * i / segments, radius_km)
        ring.append([p.lon, p.lat])
    return ring


def clusters_geojson(clusters) -> dict:
    """Member points plus a 64-gon coverage circle per cluster."""
    features = []
    for cl in clusters:
        pen = format_ipv6(cl.penultimate)
        features.append(
            {
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [_circle_ring(cl.center, cl.radius_km)],
                },
                "properties": {
                    "penultimate": pen,
                    "members": len(cl.members),
                    "radius_km": cl.radius_km,
                    "dispersed": cl.dispersed,
                },
            }
        )
        for m in cl.members:
            props = cpe_to_dict(m)
            props["penultimate"] = pen
            features.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [m.lon, m.lat]},
                    "properties": props,
                }
            )
    return {"type": "FeatureCollection", "features": features}


def cluster_summary(clusters, config: dict | None = None) -> dict:
    out = {
        "clusters": [
            {
                "penultimate": format_ipv6(cl.penultimate),
                "members": len(cl.members),
                "center": {"lat": cl.center.lat, "lon": cl.center.lon},
                "radius_km": cl.radius_km,
                "dispersed": cl.dispersed,
            }
            for cl in clusters
        ]
    }
    if config is not None:
        out["config"] = config
    return out


def inferred_to_dict(loc: InferredLocation) -> dict:
    return {
        "target": format_ipv6(loc.target),
        "lat": loc.center.lat,
        "lon": loc.center.lon,
        "radius_km": loc.radius_km,
        "support": loc.support,
        "method": loc.method,
    }


def write_inferred_jsonl(locations, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for loc in locations:
            fh.write(json.dumps(inferred_to_dict(loc)) + "\n")
