"""WAN-MAC and BSSID corpus ingestion, hygiene filters, and the on-disk index.

Two corpora feed the pipeline: MACs decoded from EUI-64 responses (with
source address, AS number, timestamp) and geolocated BSSIDs. Ingestion
deduplicates, applies the multi-AS exclusion, and produces an immutable
CorpusIndex whose per-OUI NIC arrays are strictly ascending. The index
persists as a compact little-endian binary with an `EGIX` magic header so
large corpora are ingested once.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .macaddr import (
    NIC_MASK,
    MacFormatError,
    decode_eui64,
    flip_ul,
    flip_ul_oui,
    format_mac,
    parse_ipv6,
    parse_mac,
    parse_oui,
)

GEO_SOURCES = ("apple", "wigle", "openwifi", "mylnikov", "openbmap", "synthetic", "other")
_SOURCE_CODE = {name: i for i, name in enumerate(GEO_SOURCES)}

MAGIC = b"EGIX"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class WanMacRecord:
    mac: int
    source_addr: int
    asn: int = 0
    observed_at: int = 0

    @classmethod
    def from_addr(cls, addr: int, asn: int = 0, observed_at: int = 0, strict_ul: bool = False):
        """Decode an EUI-64 source address; None when the marker is absent."""
        mac = decode_eui64(addr, strict_ul=strict_ul)
        if mac is None:
            return None
        return cls(mac=mac, source_addr=addr, asn=asn, observed_at=observed_at)


@dataclass(frozen=True)
class BssidGeoRecord:
    bssid: int
    lat: float
    lon: float
    source: str = "other"

    def in_range(self) -> bool:
        return -90.0 <= self.lat <= 90.0 and -180.0 < self.lon <= 180.0


@dataclass(frozen=True)
class CorpusIndex:
    """Immutable fused view of both corpora, flat arrays sorted by MAC."""

    wan_mac: np.ndarray  # u64, strictly ascending
    wan_addr_hi: np.ndarray  # u64 upper half of earliest source address
    wan_addr_lo: np.ndarray  # u64 lower half
    wan_asn: np.ndarray  # u32, ASN of earliest observation
    wan_ts: np.ndarray  # u64
    wan_mult: np.ndarray  # u32, distinct source addresses per MAC
    wan_asn_n: np.ndarray  # u16, distinct nonzero ASNs per MAC
    bssid_mac: np.ndarray  # u64, strictly ascending
    bssid_lat: np.ndarray  # f64
    bssid_lon: np.ndarray  # f64
    bssid_source: np.ndarray  # u8 codes into GEO_SOURCES
    bssid_alias: np.ndarray  # u8 bool, 1 = U/L-flipped alias row
    multi_as_excluded: np.ndarray  # u64, ascending
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("wan_mac", "bssid_mac"):
            arr = getattr(self, name)
            if arr.size > 1 and not bool(np.all(arr[1:] > arr[:-1])):
                raise ValueError(f"{name} must be strictly ascending and unique")

    # -- per-OUI access ---------------------------------------------------

    def _slice(self, macs: np.ndarray, oui: int) -> slice:
        lo = int(np.searchsorted(macs, np.uint64(oui << 24)))
        hi = int(np.searchsorted(macs, np.uint64((oui + 1) << 24)))
        return slice(lo, hi)

    def wan_slice(self, oui: int) -> slice:
        return self._slice(self.wan_mac, oui)

    def bssid_slice(self, oui: int) -> slice:
        return self._slice(self.bssid_mac, oui)

    def wan_nics(self, oui: int) -> np.ndarray:
        return (self.wan_mac[self.wan_slice(oui)] & np.uint64(NIC_MASK)).astype(np.int64)

    def bssid_nics(self, oui: int) -> np.ndarray:
        return (self.bssid_mac[self.bssid_slice(oui)] & np.uint64(NIC_MASK)).astype(np.int64)

    def wan_ouis(self) -> np.ndarray:
        return np.unique((self.wan_mac >> np.uint64(24)).astype(np.uint32))

    def bssid_ouis(self) -> np.ndarray:
        return np.unique((self.bssid_mac >> np.uint64(24)).astype(np.uint32))

    def wan_count(self, oui: int) -> int:
        s = self.wan_slice(oui)
        return s.stop - s.start

    def bssid_count(self, oui: int) -> int:
        s = self.bssid_slice(oui)
        return s.stop - s.start


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class CorpusBuilder:
    """Single-writer accumulator; `build()` produces the immutable index."""

    def __init__(self, strict_ul: bool = False):
        self.strict_ul = strict_ul
        self._wan_mac: list[int] = []
        self._wan_hi: list[int] = []
        self._wan_lo: list[int] = []
        self._wan_asn: list[int] = []
        self._wan_ts: list[int] = []
        self._bssid_mac: list[int] = []
        self._bssid_lat: list[float] = []
        self._bssid_lon: list[float] = []
        self._bssid_src: list[int] = []
        self.counts = {
            "wan_records": 0,
            "wan_eui64": 0,
            "wan_non_eui64": 0,
            "wan_malformed": 0,
            "bssid_records": 0,
            "bssid_accepted": 0,
            "bssid_rejected_range": 0,
            "bssid_malformed": 0,
        }

    # -- wan --------------------------------------------------------------

    def add_wan(self, addr: int, asn: int = 0, ts: int = 0) -> bool:
        self.counts["wan_records"] += 1
        mac = decode_eui64(addr, strict_ul=self.strict_ul)
        if mac is None:
            self.counts["wan_non_eui64"] += 1
            return False
        self.counts["wan_eui64"] += 1
        self._wan_mac.append(mac)
        self._wan_hi.append(addr >> 64)
        self._wan_lo.append(addr & ((1 << 64) - 1))
        self._wan_asn.append(asn)
        self._wan_ts.append(ts)
        return True

    def add_wan_record(self, rec: WanMacRecord) -> bool:
        return self.add_wan(rec.source_addr, rec.asn, rec.observed_at)

    def add_wan_file(self, path) -> None:
        for parsed in _iter_wan_file(path, self.counts):
            self.add_wan(*parsed)

    # -- bssid --------------------------------------------------------------

    def add_bssid(self, mac: int, lat: float, lon: float, source: str = "other") -> bool:
        self.counts["bssid_records"] += 1
        if not (-90.0 <= lat <= 90.0 and -180.0 < lon <= 180.0):
            self.counts["bssid_rejected_range"] += 1
            return False
        self.counts["bssid_accepted"] += 1
        self._bssid_mac.append(mac)
        self._bssid_lat.append(lat)
        self._bssid_lon.append(lon)
        self._bssid_src.append(_SOURCE_CODE.get(source, _SOURCE_CODE["other"]))
        return True

    def add_bssid_record(self, rec: BssidGeoRecord) -> bool:
        return self.add_bssid(rec.bssid, rec.lat, rec.lon, rec.source)

    def add_bssid_file(self, path) -> None:
        for mac, lat, lon, src in _iter_bssid_file(path, self.counts):
            self.add_bssid(mac, lat, lon, src)

    # -- build --------------------------------------------------------------

    def build(self, dedupe: str = "first", seed: int | None = None) -> CorpusIndex:
        wan = self._build_wan()
        bssid = self._build_bssid(dedupe, seed)
        counts = dict(self.counts)
        counts["wan_unique_macs"] = int(wan[0].shape[0])
        counts["bssid_unique"] = int(bssid[0].shape[0])
        counts["multi_as_excluded"] = 0
        return CorpusIndex(
            wan_mac=_freeze(wan[0]),
            wan_addr_hi=_freeze(wan[1]),
            wan_addr_lo=_freeze(wan[2]),
            wan_asn=_freeze(wan[3]),
            wan_ts=_freeze(wan[4]),
            wan_mult=_freeze(wan[5]),
            wan_asn_n=_freeze(wan[6]),
            bssid_mac=_freeze(bssid[0]),
            bssid_lat=_freeze(bssid[1]),
            bssid_lon=_freeze(bssid[2]),
            bssid_source=_freeze(bssid[3]),
            bssid_alias=_freeze(np.zeros(bssid[0].shape[0], dtype=np.uint8)),
            multi_as_excluded=_freeze(np.empty(0, dtype=np.uint64)),
            counts=counts,
        )

    def _build_wan(self):
        mac = np.array(self._wan_mac, dtype=np.uint64)
        hi = np.array(self._wan_hi, dtype=np.uint64)
        lo = np.array(self._wan_lo, dtype=np.uint64)
        asn = np.array(self._wan_asn, dtype=np.uint32)
        ts = np.array(self._wan_ts, dtype=np.uint64)
        if mac.size == 0:
            return (mac, hi, lo, asn, ts, np.empty(0, np.uint32), np.empty(0, np.uint16))

        # earliest observation wins; ties resolved by input position
        order = np.lexsort((np.arange(mac.size), ts, mac))
        mac_s = mac[order]
        first = np.ones(mac_s.size, dtype=bool)
        first[1:] = mac_s[1:] != mac_s[:-1]
        rep = order[first]
        uniq_mac = mac[rep]

        # multiplicity = distinct source addresses per MAC
        addr_key = np.stack([mac, hi, lo], axis=1)
        uniq_addr = np.unique(addr_key, axis=0)
        mult = np.bincount(
            np.searchsorted(uniq_mac, uniq_addr[:, 0]), minlength=uniq_mac.size
        ).astype(np.uint32)

        # distinct nonzero ASNs per MAC
        nz = asn > 0
        asn_n = np.zeros(uniq_mac.size, dtype=np.uint16)
        if nz.any():
            as_key = np.unique(np.stack([mac[nz], asn[nz].astype(np.uint64)], axis=1), axis=0)
            np.add.at(asn_n, np.searchsorted(uniq_mac, as_key[:, 0]), 1)

        return (uniq_mac, hi[rep], lo[rep], asn[rep], ts[rep], mult, asn_n)

    def _build_bssid(self, dedupe: str, seed: int | None):
        mac = np.array(self._bssid_mac, dtype=np.uint64)
        lat = np.array(self._bssid_lat, dtype=np.float64)
        lon = np.array(self._bssid_lon, dtype=np.float64)
        src = np.array(self._bssid_src, dtype=np.uint8)
        if mac.size == 0:
            return (mac, lat, lon, src)
        order = np.lexsort((np.arange(mac.size), mac))
        mac_s = mac[order]
        starts = np.ones(mac_s.size, dtype=bool)
        starts[1:] = mac_s[1:] != mac_s[:-1]
        group_start = np.nonzero(starts)[0]
        group_end = np.append(group_start[1:], mac_s.size)
        if dedupe == "first":
            pick = group_start
        elif dedupe == "last":
            pick = group_end - 1
        elif dedupe == "random":
            rng = np.random.default_rng(seed)
            sizes = group_end - group_start
            pick = group_start + rng.integers(0, sizes)
        else:
            raise ValueError(f"unknown dedupe policy: {dedupe!r}")
        rep = order[pick]
        return (mac[rep], lat[rep], lon[rep], src[rep])


def index_from_arrays(
    wan_mac,
    bssid_mac,
    bssid_lat=None,
    bssid_lon=None,
    bssid_source: str = "synthetic",
) -> CorpusIndex:
    """Build an index straight from MAC arrays, bypassing record ingestion.

    Used on bulk synthetic paths where per-record bookkeeping (addresses,
    timestamps, AS numbers) is irrelevant. Duplicate MACs collapse to one
    row; BSSID coordinates default to the origin.
    """
    wan = np.unique(np.asarray(wan_mac, dtype=np.uint64))
    braw = np.asarray(bssid_mac, dtype=np.uint64)
    if bssid_lat is None:
        bmac = np.unique(braw)
        blat = np.zeros(bmac.shape[0], dtype=np.float64)
        blon = np.zeros(bmac.shape[0], dtype=np.float64)
    else:
        bmac, take = np.unique(braw, return_index=True)
        blat = np.asarray(bssid_lat, dtype=np.float64)[take]
        blon = np.asarray(bssid_lon, dtype=np.float64)[take]
    n, m = wan.shape[0], bmac.shape[0]
    return CorpusIndex(
        wan_mac=_freeze(wan),
        wan_addr_hi=_freeze(np.zeros(n, dtype=np.uint64)),
        wan_addr_lo=_freeze(np.zeros(n, dtype=np.uint64)),
        wan_asn=_freeze(np.zeros(n, dtype=np.uint32)),
        wan_ts=_freeze(np.zeros(n, dtype=np.uint64)),
        wan_mult=_freeze(np.ones(n, dtype=np.uint32)),
        wan_asn_n=_freeze(np.zeros(n, dtype=np.uint16)),
        bssid_mac=_freeze(bmac),
        bssid_lat=_freeze(blat),
        bssid_lon=_freeze(blon),
        bssid_source=_freeze(
            np.full(m, _SOURCE_CODE.get(bssid_source, _SOURCE_CODE["other"]), dtype=np.uint8)
        ),
        bssid_alias=_freeze(np.zeros(m, dtype=np.uint8)),
        multi_as_excluded=_freeze(np.empty(0, dtype=np.uint64)),
        counts={
            "wan_unique_macs": int(n),
            "bssid_unique": int(m),
            "multi_as_excluded": 0,
        },
    )


# ---------------------------------------------------------------------------
# spec-surface convenience wrappers
# ---------------------------------------------------------------------------

def ingest_wan(records, strict_ul: bool = False) -> CorpusIndex:
    """Build a WAN-only index from WanMacRecord objects."""
    b = CorpusBuilder(strict_ul=strict_ul)
    for rec in records:
        b.add_wan_record(rec)
    return b.build()


def ingest_bssid(records, dedupe: str = "first", seed: int | None = None) -> CorpusIndex:
    """Build a BSSID-only index with the given canonical-location policy."""
    b = CorpusBuilder()
    for rec in records:
        b.add_bssid_record(rec)
    return b.build(dedupe=dedupe, seed=seed)


def exclude_multi_as(index: CorpusIndex) -> CorpusIndex:
    """Move MACs observed under two or more distinct nonzero ASNs out of play."""
    bad = index.wan_asn_n >= 2
    if not bad.any():
        return index
    keep = ~bad
    excluded = np.sort(np.concatenate([index.multi_as_excluded, index.wan_mac[bad]]))
    counts = dict(index.counts)
    counts["multi_as_excluded"] = int(excluded.shape[0])
    return replace(
        index,
        wan_mac=_freeze(index.wan_mac[keep]),
        wan_addr_hi=_freeze(index.wan_addr_hi[keep]),
        wan_addr_lo=_freeze(index.wan_addr_lo[keep]),
        wan_asn=_freeze(index.wan_asn[keep]),
        wan_ts=_freeze(index.wan_ts[keep]),
        wan_mult=_freeze(index.wan_mult[keep]),
        wan_asn_n=_freeze(index.wan_asn_n[keep]),
        multi_as_excluded=_freeze(excluded),
        counts=counts,
    )


def canonicalize_ul(index: CorpusIndex, registry) -> CorpusIndex:
    """Alias BSSIDs from unregistered OUIs whose U/L-flipped OUI is registered.

    Access points often invert the U/L bit of their base BSSID to run
    virtual WLANs; aliasing folds those observations back under the
    registered OUI so offset matching can see them. Original rows are
    retained; alias rows carry a flag. Identity when no registry is given.
    """
    if not registry:
        return index
    reg = registry if isinstance(registry, set) else set(registry)
    ouis = (index.bssid_mac >> np.uint64(24)).astype(np.int64)
    present = np.unique(ouis)
    alias_rows = []
    for oui in present.tolist():
        if oui in reg:
            continue
        flipped = flip_ul_oui(oui)
        if flipped not in reg:
            continue
        sl = index.bssid_slice(oui)
        alias_rows.append(sl)
    if not alias_rows:
        return index
    parts_mac = [index.bssid_mac]
    parts_lat = [index.bssid_lat]
    parts_lon = [index.bssid_lon]
    parts_src = [index.bssid_source]
    parts_alias = [index.bssid_alias]
    for sl in alias_rows:
        amac = index.bssid_mac[sl] ^ np.uint64(0x0200_0000_0000)
        new = ~np.isin(amac, index.bssid_mac)  # a real row wins over an alias
        parts_mac.append(amac[new])
        parts_lat.append(index.bssid_lat[sl][new])
        parts_lon.append(index.bssid_lon[sl][new])
        parts_src.append(index.bssid_source[sl][new])
        parts_alias.append(np.ones(int(new.sum()), dtype=np.uint8))
    mac = np.concatenate(parts_mac)
    order = np.argsort(mac, kind="stable")
    counts = dict(index.counts)
    counts["bssid_ul_aliases"] = int(mac.shape[0] - index.bssid_mac.shape[0])
    return replace(
        index,
        bssid_mac=_freeze(mac[order]),
        bssid_lat=_freeze(np.concatenate(parts_lat)[order]),
        bssid_lon=_freeze(np.concatenate(parts_lon)[order]),
        bssid_source=_freeze(np.concatenate(parts_src)[order]),
        bssid_alias=_freeze(np.concatenate(parts_alias)[order]),
        counts=counts,
    )


# ---------------------------------------------------------------------------
# file readers
# ---------------------------------------------------------------------------

def _iter_wan_file(path, counts):
    """Yield (addr, asn, ts) tuples; malformed lines are counted, not fatal."""
    text = open(path, "r", encoding="utf-8")
    with text:
        head = text.readline()
        if not head:
            return
        is_csv = not head.lstrip().startswith("{")
        if is_csv:
            rows = csv.reader(io.StringIO(head + text.read()))
            for row in rows:
                if not row or row[0].strip() == "addr":
                    continue
                try:
                    addr = parse_ipv6(row[0])
                    asn = int(row[1]) if len(row) > 1 and row[1] else 0
                    ts = int(row[2]) if len(row) > 2 and row[2] else 0
                except (ValueError, MacFormatError):
                    counts["wan_malformed"] += 1
                    continue
                yield addr, asn, ts
        else:
            for line in [head] + text.readlines():
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    addr = parse_ipv6(obj["addr"])
                    asn = int(obj.get("asn", 0))
                    ts = int(obj.get("ts", 0))
                except (ValueError, KeyError, TypeError):
                    counts["wan_malformed"] += 1
                    continue
                yield addr, asn, ts


def _iter_bssid_file(path, counts):
    text = open(path, "r", encoding="utf-8")
    with text:
        head = text.readline()
        if not head:
            return
        is_csv = not head.lstrip().startswith("{")
        if is_csv:
            rows = csv.reader(io.StringIO(head + text.read()))
            for row in rows:
                if not row or row[0].strip() == "bssid":
                    continue
                try:
                    mac = parse_mac(row[0])
                    lat = float(row[1])
                    lon = float(row[2])
                    src = row[3].strip() if len(row) > 3 else "other"
                except (ValueError, IndexError, MacFormatError):
                    counts["bssid_malformed"] += 1
                    continue
                yield mac, lat, lon, src
        else:
            for line in [head] + text.readlines():
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    mac = parse_mac(obj["bssid"])
                    lat = float(obj["lat"])
                    lon = float(obj["lon"])
                    src = str(obj.get("source", "other"))
                except (ValueError, KeyError, TypeError, MacFormatError):
                    counts["bssid_malformed"] += 1
                    continue
                yield mac, lat, lon, src


def read_oui_registry(path) -> set[int]:
    """Registered-OUI list, one `AA:BB:CC` per line; blank lines ignored."""
    out = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.add(parse_oui(line))
    return out


# ---------------------------------------------------------------------------
# EGIX binary persistence
# ---------------------------------------------------------------------------

_WAN_FIELDS = (
    ("wan_mac", "<u8"),
    ("wan_addr_hi", "<u8"),
    ("wan_addr_lo", "<u8"),
    ("wan_asn", "<u4"),
    ("wan_ts", "<u8"),
    ("wan_mult", "<u4"),
    ("wan_asn_n", "<u2"),
)
_BSSID_FIELDS = (
    ("bssid_mac", "<u8"),
    ("bssid_lat", "<f8"),
    ("bssid_lon", "<f8"),
    ("bssid_source", "u1"),
    ("bssid_alias", "u1"),
)


def save_index(index: CorpusIndex, path) -> None:
    header = json.dumps(
        {
            "n_wan": int(index.wan_mac.shape[0]),
            "n_bssid": int(index.bssid_mac.shape[0]),
            "n_excluded": int(index.multi_as_excluded.shape[0]),
            "counts": index.counts,
        }
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        for name, dt in _WAN_FIELDS:
            fh.write(np.ascontiguousarray(getattr(index, name), dtype=dt).tobytes())
        for name, dt in _BSSID_FIELDS:
            fh.write(np.ascontiguousarray(getattr(index, name), dtype=dt).tobytes())
        fh.write(np.ascontiguousarray(index.multi_as_excluded, dtype="<u8").tobytes())


def load_index(path) -> CorpusIndex:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"not an index file (bad magic): {path}")
    version = blob[4]
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported index version {version}")
    hlen = int.from_bytes(blob[5:9], "little")
    header = json.loads(blob[9 : 9 + hlen])
    pos = 9 + hlen
    arrays = {}
    for name, dt in _WAN_FIELDS:
        n = header["n_wan"] * np.dtype(dt).itemsize
        arrays[name] = _freeze(np.frombuffer(blob[pos : pos + n], dtype=dt).copy())
        pos += n
    for name, dt in _BSSID_FIELDS:
        n = header["n_bssid"] * np.dtype(dt).itemsize
        arrays[name] = _freeze(np.frombuffer(blob[pos : pos + n], dtype=dt).copy())
        pos += n
    n = header["n_excluded"] * 8
    excluded = _freeze(np.frombuffer(blob[pos : pos + n], dtype="<u8").copy())
    return CorpusIndex(multi_as_excluded=excluded, counts=header["counts"], **arrays)


def describe_wan_record(index: CorpusIndex, row: int) -> WanMacRecord:
    """Materialize one indexed WAN row back into a record."""
    addr = (int(index.wan_addr_hi[row]) << 64) | int(index.wan_addr_lo[row])
    return WanMacRecord(
        mac=int(index.wan_mac[row]),
        source_addr=addr,
        asn=int(index.wan_asn[row]),
        observed_at=int(index.wan_ts[row]),
    )


def bssid_text(index: CorpusIndex, row: int) -> str:
    return format_mac(int(index.bssid_mac[row]))
