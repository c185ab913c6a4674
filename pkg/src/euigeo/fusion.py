"""Apply offset models to WAN MACs and join predicted BSSIDs to geolocations."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import GEO_SOURCES, CorpusIndex
from .macaddr import NIC_MASK, format_ipv6, format_mac, mac_add, oui_of
from .offsets import OuiOffsetModel


class OuiMismatch(ValueError):
    """Model applied to a WAN MAC from a different OUI."""


@dataclass(frozen=True)
class GeolocatedCpe:
    wan_mac: int
    source_addr: int
    predicted_bssid: int
    lat: float
    lon: float
    model_confidence: float
    geo_source: str
    ul_alias: bool = False


@dataclass
class FusionStats:
    eligible: int = 0  # WAN MACs whose OUI has a model
    predicted: int = 0  # eligible minus OUI-boundary overflow
    matched: int = 0
    unmatched: int = 0
    overflow_absent: int = 0
    no_model: int = 0
    match_rate: float = 0.0


def predict_bssid(wan_mac: int, model: OuiOffsetModel) -> int | None:
    """WAN MAC plus the model offset; None when it leaves the OUI."""
    if oui_of(wan_mac) != model.oui:
        raise OuiMismatch(
            f"model for {model.oui:06x} applied to MAC in {oui_of(wan_mac):06x}"
        )
    return mac_add(wan_mac, model.offset)


def fuse(index: CorpusIndex, models) -> tuple[list[GeolocatedCpe], FusionStats]:
    """Geolocate every WAN MAC whose predicted BSSID is in the geo corpus.

    Output is ordered by (OUI, NIC). Models are expected to be filtered
    already; OUIs without a model are tallied as no-model.
    """
    by_oui = {m.oui: m for m in models}
    stats = FusionStats()
    rows: list[GeolocatedCpe] = []
    for oui in index.wan_ouis().tolist():
        sl = index.wan_slice(oui)
        n = sl.stop - sl.start
        model = by_oui.get(oui)
        if model is None:
            stats.no_model += n
            continue
        stats.eligible += n
        nics = index.wan_nics(oui)
        pred = nics + model.offset
        ok = (pred >= 0) & (pred <= NIC_MASK)
        stats.overflow_absent += int(n - ok.sum())
        stats.predicted += int(ok.sum())

        bsl = index.bssid_slice(oui)
        bnics = index.bssid_nics(oui)
        pos = np.searchsorted(bnics, pred[ok])
        pos_c = np.minimum(pos, max(bnics.shape[0] - 1, 0))
        hit = np.zeros(pred[ok].shape[0], dtype=bool)
        if bnics.shape[0]:
            hit = bnics[pos_c] == pred[ok]
        wan_rows = np.nonzero(ok)[0][hit] + sl.start
        bssid_rows = pos_c[hit] + bsl.start
        stats.matched += int(hit.sum())
        for wr, br in zip(wan_rows.tolist(), bssid_rows.tolist()):
            rows.append(
                GeolocatedCpe(
                    wan_mac=int(index.wan_mac[wr]),
                    source_addr=(int(index.wan_addr_hi[wr]) << 64)
                    | int(index.wan_addr_lo[wr]),
                    predicted_bssid=int(index.bssid_mac[br]),
                    lat=float(index.bssid_lat[br]),
                    lon=float(index.bssid_lon[br]),
                    model_confidence=model.confidence,
                    geo_source=GEO_SOURCES[int(index.bssid_source[br])],
                    ul_alias=bool(index.bssid_alias[br]),
                )
            )
    stats.unmatched = stats.predicted - stats.matched
    stats.match_rate = stats.matched / stats.eligible if stats.eligible else 0.0
    return rows, stats


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def cpe_to_dict(cpe: GeolocatedCpe) -> dict:
    return {
        "wan_mac": format_mac(cpe.wan_mac),
        "addr": format_ipv6(cpe.source_addr),
        "bssid": format_mac(cpe.predicted_bssid),
        "lat": cpe.lat,
        "lon": cpe.lon,
        "confidence": cpe.model_confidence,
        "source": cpe.geo_source,
        "ul_alias": cpe.ul_alias,
    }


def write_fused_jsonl(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cpe in rows:
            fh.write(json.dumps(cpe_to_dict(cpe)) + "\n")


def fused_geojson(rows) -> dict:
    features = []
    for cpe in rows:
        props = cpe_to_dict(cpe)
        lat = props.pop("lat")
        lon = props.pop("lon")
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [lon, lat]},
                "properties": props,
            }
        )
    return {"type": "FeatureCollection", "features": features}


def write_fused_geojson(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fused_geojson(rows), fh)
        fh.write("\n")


def stats_to_dict(stats: FusionStats, config: dict | None = None) -> dict:
    out = asdict(stats)
    if config is not None:
        out["config"] = config
    return out
