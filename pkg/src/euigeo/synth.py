"""Synthetic population generator with a ground-truth ledger.

Models vendor MAC allocation policy (block size, in-block WAN/BSSID
positions, inter-device gaps), observation loss per corpus, and a
router/prefix topology, then emits the exact corpus and trace file
formats the pipeline ingests. The ledger records every planted fact so
tests can check inference output against known truth. Generation is
single-threaded and byte-deterministic for a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .clusters import TraceRecord
from .corpus import CorpusBuilder, CorpusIndex
from .geo import EARTH_RADIUS_KM, GeoPoint
from .macaddr import (
    OUI_MAX,
    encode_eui64_iids,
    eui64_marker_mask,
    format_ipv6,
    format_mac,
    format_oui,
)


class CapacityExceeded(ValueError):
    """Profile layout would overflow the 24-bit NIC space of its OUI."""


@dataclass(frozen=True)
class VendorProfile:
    """One vendor allocation policy within one OUI."""

    oui: int
    alloc_size: int
    wan_index: int
    bssid_indices: tuple[int, ...]
    device_count: int
    wan_obs_prob: float = 1.0
    bssid_obs_prob: float = 1.0
    bssid_obs_probs: tuple[float, ...] | None = None  # per-radio override
    primary_bssid: int | None = None  # defaults to the highest in-block BSSID
    split_oui: int | None = None  # BSSIDs live in a different OUI
    start_nic: int = 0
    gap_choices: tuple[int, ...] = (0,)
    gap_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0 <= self.wan_index < self.alloc_size:
            raise ValueError("wan_index outside the allocation block")
        if not self.bssid_indices:
            raise ValueError("profile needs at least one BSSID index")
        if any(not 0 <= b < self.alloc_size for b in self.bssid_indices):
            raise ValueError("bssid index outside the allocation block")
        if self.bssid_obs_probs is not None and len(self.bssid_obs_probs) != len(
            self.bssid_indices
        ):
            raise ValueError("bssid_obs_probs must match bssid_indices")

    @property
    def primary_index(self) -> int:
        return self.primary_bssid if self.primary_bssid is not None else max(self.bssid_indices)

    @property
    def true_offset(self) -> int:
        return self.primary_index - self.wan_index

    @property
    def radio_probs(self) -> tuple[float, ...]:
        if self.bssid_obs_probs is not None:
            return self.bssid_obs_probs
        return tuple(self.bssid_obs_prob for _ in self.bssid_indices)


@dataclass(frozen=True)
class RouterSite:
    name: str
    center: GeoPoint
    dispersion_km: float
    prefix48: int  # value of the upper 48 address bits
    penultimate: int  # provider router address
    asn: int = 64512

    @property
    def core(self) -> int:
        # upstream hop before the penultimate on every generated path
        return self.penultimate ^ 0xFF


DEFAULT_SITE = RouterSite(
    name="site0",
    center=GeoPoint(0.0, 0.0),
    dispersion_km=0.0,
    prefix48=0x20010DB80000,
    penultimate=(0x20010DB8 << 96) | 0x1,
)


@dataclass
class ProfileLedger:
    """Planted truth for one profile, column-oriented over its devices."""

    profile: VendorProfile
    wan_mac: np.ndarray  # u64 (D,)
    bssid_mac: np.ndarray  # u64 (D, K)
    wan_observed: np.ndarray  # bool (D,)
    bssid_observed: np.ndarray  # bool (D, K)
    lat: np.ndarray  # f64 (D,)
    lon: np.ndarray  # f64 (D,)
    site_idx: np.ndarray  # i64 (D,)
    addr_hi: np.ndarray  # u64 (D,)
    addr_lo: np.ndarray  # u64 (D,)
    uses_eui64: np.ndarray  # bool (D,)

    @property
    def true_offset(self) -> int:
        return self.profile.true_offset

    def addr(self, i: int) -> int:
        return (int(self.addr_hi[i]) << 64) | int(self.addr_lo[i])


@dataclass
class GroundTruthLedger:
    profiles: list[ProfileLedger]
    sites: list[RouterSite]
    noise: dict = field(default_factory=dict)

    @property
    def planted(self) -> dict[int, tuple[int, int]]:
        return {pl.profile.oui: (pl.profile.alloc_size, pl.true_offset) for pl in self.profiles}

    def device_count(self) -> int:
        return sum(pl.wan_mac.shape[0] for pl in self.profiles)


def _layout_blocks(profile: VendorProfile, rng) -> np.ndarray:
    """Block start NICs; contiguous except for sampled inter-device gaps."""
    d = profile.device_count
    if len(profile.gap_choices) == 1 and profile.gap_choices[0] == 0:
        gaps = np.zeros(d, dtype=np.int64)
    else:
        weights = profile.gap_weights
        p = None
        if weights is not None:
            w = np.asarray(weights, dtype=np.float64)
            p = w / w.sum()
        gaps = rng.choice(np.asarray(profile.gap_choices, dtype=np.int64), size=d, p=p)
    strides = np.full(d, profile.alloc_size, dtype=np.int64) + gaps
    starts = profile.start_nic + np.concatenate([[0], np.cumsum(strides[:-1])])
    end = int(starts[-1]) + profile.alloc_size
    if end > (1 << 24):
        raise CapacityExceeded(
            f"profile {format_oui(profile.oui)} needs NIC {end:#x} > 2^24"
        )
    return starts


def _disk_offsets(n: int, radius_km: float, center_lat: float, rng):
    """Uniform displacements within a disk, returned as (dlat, dlon) degrees."""
    r = radius_km * np.sqrt(rng.random(n))
    theta = rng.random(n) * 2.0 * np.pi
    dlat = np.degrees((r / EARTH_RADIUS_KM) * np.cos(theta))
    coslat = max(np.cos(np.radians(center_lat)), 1e-6)
    dlon = np.degrees((r / EARTH_RADIUS_KM) * np.sin(theta)) / coslat
    return dlat, dlon


def _random_iids(n: int, rng) -> np.ndarray:
    iids = rng.integers(0, 1 << 64, size=n, dtype=np.uint64)
    while True:  # keep deliberate non-EUI-64 addresses marker-free
        bad = eui64_marker_mask(iids)
        k = int(bad.sum())
        if k == 0:
            return iids
        iids[bad] = rng.integers(0, 1 << 64, size=k, dtype=np.uint64)


@dataclass
class SynthResult:
    ledger: GroundTruthLedger
    seed: int
    # appended by inject_noise: (addr_hi, addr_lo, asn) triples
    extra_wan: list[tuple[int, int, int]] = field(default_factory=list)

    # -- file payload iterators ------------------------------------------

    def wan_records(self):
        """(addr, asn, ts) for every observed EUI-64 WAN interface."""
        for pl in self.ledger.profiles:
            sites = self.ledger.sites
            take = np.nonzero(pl.wan_observed & pl.uses_eui64)[0]
            for i in take.tolist():
                addr = pl.addr(i)
                yield addr, sites[pl.site_idx[i]].asn, 0
        for hi, lo, asn in self.extra_wan:
            yield (hi << 64) | lo, asn, 0

    def bssid_records(self):
        """(mac, lat, lon, source) for every observed radio."""
        for pl in self.ledger.profiles:
            obs = np.nonzero(pl.bssid_observed)
            for i, k in zip(obs[0].tolist(), obs[1].tolist()):
                yield int(pl.bssid_mac[i, k]), float(pl.lat[i]), float(pl.lon[i]), "synthetic"

    def traces(self) -> list[TraceRecord]:
        out = []
        for pl in self.ledger.profiles:
            for i in range(pl.wan_mac.shape[0]):
                site = self.ledger.sites[pl.site_idx[i]]
                out.append(
                    TraceRecord(
                        target=pl.addr(i),
                        hops=(site.core, site.penultimate, pl.addr(i)),
                        responded=True,
                    )
                )
        return out

    # -- outputs -----------------------------------------------------------

    def build_index(self, dedupe: str = "first", seed: int | None = None) -> CorpusIndex:
        b = CorpusBuilder()
        for addr, asn, ts in self.wan_records():
            b.add_wan(addr, asn, ts)
        for mac, lat, lon, src in self.bssid_records():
            b.add_bssid(mac, lat, lon, src)
        return b.build(dedupe=dedupe, seed=seed)

    def write(self, out_dir, parts=("wan", "bssid", "traces", "ledger")) -> dict[str, str]:
        import os

        os.makedirs(out_dir, exist_ok=True)
        paths = {name: os.path.join(out_dir, f"{name}.jsonl") for name in parts}
        if "wan" in parts:
            with open(paths["wan"], "w") as fh:
                for addr, asn, ts in self.wan_records():
                    fh.write(
                        json.dumps({"addr": format_ipv6(addr), "asn": asn, "ts": ts}) + "\n"
                    )
        if "bssid" in parts:
            with open(paths["bssid"], "w") as fh:
                for mac, lat, lon, src in self.bssid_records():
                    fh.write(
                        json.dumps(
                            {"bssid": format_mac(mac), "lat": lat, "lon": lon, "source": src}
                        )
                        + "\n"
                    )
        if "traces" in parts:
            with open(paths["traces"], "w") as fh:
                for tr in self.traces():
                    fh.write(json.dumps(tr.to_dict()) + "\n")
        if "ledger" in parts:
            self.write_ledger(paths["ledger"])
        return paths

    def write_ledger(self, path) -> None:
        with open(path, "w") as fh:
            meta = {
                "seed": self.seed,
                "planted": {
                    format_oui(oui): {"alloc": a, "offset": o}
                    for oui, (a, o) in self.ledger.planted.items()
                },
                "noise": self.ledger.noise,
            }
            fh.write(json.dumps({"meta": meta}) + "\n")
            device_id = 0
            for pl in self.ledger.profiles:
                for i in range(pl.wan_mac.shape[0]):
                    site = self.ledger.sites[pl.site_idx[i]]
                    fh.write(
                        json.dumps(
                            {
                                "device_id": device_id,
                                "wan_mac": format_mac(int(pl.wan_mac[i])),
                                "bssids": [format_mac(int(m)) for m in pl.bssid_mac[i]],
                                "lat": float(pl.lat[i]),
                                "lon": float(pl.lon[i]),
                                "penultimate": format_ipv6(site.penultimate),
                                "prefix48": f"{site.prefix48:012x}",
                                "uses_eui64": bool(pl.uses_eui64[i]),
                                "wan_observed": bool(pl.wan_observed[i]),
                                "bssids_observed": [bool(x) for x in pl.bssid_observed[i]],
                            }
                        )
                        + "\n"
                    )
                    device_id += 1


def generate(
    profiles,
    topology: list[RouterSite] | None = None,
    seed: int = 0,
    noneui_fraction: float = 0.0,
) -> SynthResult:
    """Lay out devices, sample observations, and assign topology/coords."""
    sites = list(topology) if topology else [DEFAULT_SITE]
    rng = np.random.default_rng(seed)
    ledgers = []
    global_ordinal = 0
    per_site_counter = [0] * len(sites)
    for profile in profiles:
        d = profile.device_count
        starts = _layout_blocks(profile, rng)
        base = np.uint64(profile.oui << 24)
        wan_mac = base + (starts + profile.wan_index).astype(np.uint64)
        bssid_oui = profile.split_oui if profile.split_oui is not None else profile.oui
        bbase = np.uint64(bssid_oui << 24)
        k = len(profile.bssid_indices)
        bssid_mac = np.empty((d, k), dtype=np.uint64)
        for j, idx in enumerate(profile.bssid_indices):
            bssid_mac[:, j] = bbase + (starts + idx).astype(np.uint64)

        wan_observed = rng.random(d) < profile.wan_obs_prob
        bssid_observed = np.empty((d, k), dtype=bool)
        for j, p in enumerate(profile.radio_probs):
            bssid_observed[:, j] = rng.random(d) < p

        uses_eui64 = np.ones(d, dtype=bool)
        if noneui_fraction > 0:
            uses_eui64 = rng.random(d) >= noneui_fraction

        site_idx = (global_ordinal + np.arange(d)) % len(sites)
        global_ordinal += d

        lat = np.empty(d, dtype=np.float64)
        lon = np.empty(d, dtype=np.float64)
        addr_hi = np.empty(d, dtype=np.uint64)
        for s, site in enumerate(sites):
            sel = np.nonzero(site_idx == s)[0]
            if sel.size == 0:
                continue
            dlat, dlon = _disk_offsets(sel.size, site.dispersion_km, site.center.lat, rng)
            lat[sel] = site.center.lat + dlat
            lon[sel] = site.center.lon + dlon
            subnets = per_site_counter[s] + np.arange(sel.size)
            per_site_counter[s] += sel.size
            if per_site_counter[s] > 0xFFFF:
                raise CapacityExceeded(f"site {site.name} exceeds 2^16 /64 subnets")
            addr_hi[sel] = (np.uint64(site.prefix48) << np.uint64(16)) | subnets.astype(
                np.uint64
            )

        addr_lo = encode_eui64_iids(wan_mac)
        n_rand = int((~uses_eui64).sum())
        if n_rand:
            addr_lo = addr_lo.copy()
            addr_lo[~uses_eui64] = _random_iids(n_rand, rng)

        ledgers.append(
            ProfileLedger(
                profile=profile,
                wan_mac=wan_mac,
                bssid_mac=bssid_mac,
                wan_observed=wan_observed,
                bssid_observed=bssid_observed,
                lat=lat,
                lon=lon,
                site_idx=site_idx,
                addr_hi=addr_hi,
                addr_lo=addr_lo,
                uses_eui64=uses_eui64,
            )
        )
    return SynthResult(ledger=GroundTruthLedger(profiles=ledgers, sites=sites), seed=seed)


def inject_noise(
    result: SynthResult,
    false_eui_count: int = 0,
    random_iid_count: int = 0,
    multi_as_rate: float = 0.0,
    seed: int = 0,
) -> SynthResult:
    """Append labeled noise records to the WAN corpus.

    false_eui_count: fabricated EUI-64 addresses whose MACs belong to no
    device (drawn from a reserved OUI). random_iid_count: addresses with
    uniform random IIDs, of which ~1/65,536 will spuriously carry the
    marker. multi_as_rate: fraction of real observed MACs re-announced
    under a second ASN, making them multi-AS.
    """
    rng = np.random.default_rng(seed)
    noise_prefix = np.uint64(0x20010DB8FFFF) << np.uint64(16)
    extra = list(result.extra_wan)
    noise = dict(result.ledger.noise)

    if random_iid_count:
        iids = rng.integers(0, 1 << 64, size=random_iid_count, dtype=np.uint64)
        hi = noise_prefix | np.uint64(1)
        extra.extend((int(hi), int(lo), 0) for lo in iids)
        noise["random_iid"] = noise.get("random_iid", 0) + random_iid_count

    if false_eui_count:
        reserved_oui = 0xDEAD00
        nics = rng.integers(0, 1 << 24, size=false_eui_count, dtype=np.uint64)
        macs = np.uint64(reserved_oui << 24) | nics
        iids = encode_eui64_iids(macs)
        hi = noise_prefix | np.uint64(2)
        extra.extend((int(hi), int(lo), 0) for lo in iids)
        noise["false_eui"] = noise.get("false_eui", 0) + false_eui_count
        noise["false_eui_oui"] = format_oui(reserved_oui)

    if multi_as_rate > 0:
        macs = []
        for pl in result.ledger.profiles:
            take = np.nonzero(pl.wan_observed & pl.uses_eui64)[0]
            pick = take[rng.random(take.size) < multi_as_rate]
            for i in pick.tolist():
                site = result.ledger.sites[pl.site_idx[i]]
                extra.append((int(pl.addr_hi[i]), int(pl.addr_lo[i]), site.asn + 1000))
                macs.append(format_mac(int(pl.wan_mac[i])))
        noise["multi_as_macs"] = noise.get("multi_as_macs", []) + macs

    new_ledger = GroundTruthLedger(
        profiles=result.ledger.profiles, sites=result.ledger.sites, noise=noise
    )
    return SynthResult(ledger=new_ledger, seed=result.seed, extra_wan=extra)


# ---------------------------------------------------------------------------
# canned suites
# ---------------------------------------------------------------------------

def paper_suite_profiles() -> list[VendorProfile]:
    """Vendor mix modeled on the worked examples: a four-interface router
    with BSSIDs just below the WAN MAC, a seven-address block with 2.4/5
    GHz radios near the top, a sixteen-address block with the BSSID two
    below the WAN, and a zero-offset hotspot profile."""
    gaps = ((0, 3, 11), (0.6, 0.2, 0.2))
    return [
        VendorProfile(  # four sequential interfaces, BSSIDs at -1/-2
            oui=0x001122,
            alloc_size=4,
            wan_index=3,
            bssid_indices=(1, 2),
            bssid_obs_probs=(0.1, 0.55),
            device_count=1500,
            wan_obs_prob=0.6,
            gap_choices=gaps[0],
            gap_weights=gaps[1],
        ),
        VendorProfile(  # seven-address block, radios at +5/+6
            oui=0xE0286D,
            alloc_size=7,
            wan_index=0,
            bssid_indices=(5, 6),
            bssid_obs_probs=(0.15, 0.55),
            device_count=2000,
            wan_obs_prob=0.5,
            gap_choices=gaps[0],
            gap_weights=gaps[1],
        ),
        VendorProfile(  # sixteen-address block, BSSID two below the WAN
            oui=0x001DD1,
            alloc_size=16,
            wan_index=2,
            bssid_indices=(0,),
            device_count=2000,
            wan_obs_prob=0.4,
            bssid_obs_prob=0.4,
            gap_choices=gaps[0],
            gap_weights=gaps[1],
        ),
        VendorProfile(  # hotspot: WAN address reuses the radio MAC
            oui=0xA06518,
            alloc_size=2,
            wan_index=0,
            bssid_indices=(0,),
            device_count=1200,
            wan_obs_prob=0.5,
            bssid_obs_prob=0.5,
            gap_choices=gaps[0],
            gap_weights=gaps[1],
        ),
    ]


def demo_topology() -> list[RouterSite]:
    base = 0x20010DB8 << 96
    return [
        RouterSite(
            name=f"router{i}",
            center=GeoPoint(39.77 + 0.08 * i, -86.16 - 0.05 * i),
            dispersion_km=6.0,
            prefix48=0x20010DB80000 + i,
            penultimate=base | (0x100 + i),
        )
        for i in range(4)
    ]
