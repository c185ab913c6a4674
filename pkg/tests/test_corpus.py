"""Ingestion, dedup, multi-AS exclusion, U/L aliasing, and persistence."""

import json

import numpy as np
import pytest

from euigeo.corpus import (
    BssidGeoRecord,
    CorpusBuilder,
    WanMacRecord,
    canonicalize_ul,
    exclude_multi_as,
    ingest_bssid,
    ingest_wan,
    load_index,
    save_index,
)
from euigeo.macaddr import encode_eui64, format_mac, parse_ipv6, parse_mac, parse_oui


def wan_rec(mac_text, prefix_text="fe80::", asn=0, ts=0):
    mac = parse_mac(mac_text)
    return WanMacRecord(
        mac=mac, source_addr=encode_eui64(parse_ipv6(prefix_text), mac), asn=asn, observed_at=ts
    )


class TestWanIngest:
    def test_dedup_by_mac_counts_addresses(self):
        recs = [
            wan_rec("00:11:22:33:44:55", "2001:db8:1::"),
            wan_rec("00:11:22:33:44:55", "2001:db8:2::"),
            wan_rec("00:11:22:33:44:55", "2001:db8:3::"),
        ]
        idx = ingest_wan(recs)
        assert idx.wan_mac.shape[0] == 1
        assert int(idx.wan_mult[0]) == 3

    def test_large_multiplicity(self):
        mac = parse_mac("00:11:22:33:44:55")
        recs = [
            WanMacRecord(mac=mac, source_addr=encode_eui64((0x20010DB8 << 96) | (i << 64), mac))
            for i in range(5652)
        ]
        idx = ingest_wan(recs)
        assert int(idx.wan_mult[0]) == 5652

    def test_empty_stream(self):
        idx = ingest_wan([])
        assert idx.wan_mac.shape[0] == 0

    def test_earliest_observation_wins(self):
        recs = [
            wan_rec("00:11:22:33:44:55", "2001:db8:1::", asn=100, ts=50),
            wan_rec("00:11:22:33:44:55", "2001:db8:2::", asn=200, ts=10),
        ]
        idx = ingest_wan(recs)
        assert int(idx.wan_ts[0]) == 10
        assert int(idx.wan_asn[0]) == 200

    def test_repeated_address_not_double_counted(self):
        recs = [wan_rec("00:11:22:33:44:55")] * 4
        idx = ingest_wan(recs)
        assert int(idx.wan_mult[0]) == 1

    def test_accounting_invariant(self):
        rng = np.random.default_rng(5)
        macs = rng.integers(0, 1 << 48, size=500, dtype=np.uint64)
        recs = []
        for i, m in enumerate(macs):
            asn = 7922 if i % 2 else 3320
            recs.append(
                WanMacRecord(mac=int(m), source_addr=encode_eui64(0, int(m)), asn=asn)
            )
            if i % 10 == 0:  # every tenth MAC also shows up in a second AS
                recs.append(
                    WanMacRecord(mac=int(m), source_addr=encode_eui64(1 << 64, int(m)), asn=1)
                )
        idx = exclude_multi_as(ingest_wan(recs))
        distinct = len({r.mac for r in recs})
        assert idx.wan_mac.shape[0] + idx.multi_as_excluded.shape[0] == distinct


class TestMultiAs:
    def test_two_as_excluded(self):
        recs = [
            wan_rec("00:11:22:33:44:55", "2001:db8:1::", asn=7922),
            wan_rec("00:11:22:33:44:55", "2001:db8:2::", asn=3320),
        ]
        idx = exclude_multi_as(ingest_wan(recs))
        assert idx.wan_mac.shape[0] == 0
        assert idx.multi_as_excluded.shape[0] == 1

    def test_same_as_twice_retained(self):
        recs = [
            wan_rec("00:11:22:33:44:55", "2001:db8:1::", asn=7922),
            wan_rec("00:11:22:33:44:55", "2001:db8:2::", asn=7922),
        ]
        idx = exclude_multi_as(ingest_wan(recs))
        assert idx.wan_mac.shape[0] == 1
        assert idx.multi_as_excluded.shape[0] == 0

    def test_unknown_as_never_triggers(self):
        recs = [
            wan_rec("00:11:22:33:44:55", "2001:db8:1::", asn=0),
            wan_rec("00:11:22:33:44:55", "2001:db8:2::", asn=7922),
        ]
        idx = exclude_multi_as(ingest_wan(recs))
        assert idx.wan_mac.shape[0] == 1


class TestBssidIngest:
    def test_canonical_policy_first_and_last(self):
        recs = [
            BssidGeoRecord(parse_mac("AA:BB:CC:00:00:01"), 10.0, 20.0, "wigle"),
            BssidGeoRecord(parse_mac("AA:BB:CC:00:00:01"), 30.0, 40.0, "apple"),
        ]
        first = ingest_bssid(recs, dedupe="first")
        last = ingest_bssid(recs, dedupe="last")
        assert first.bssid_mac.shape[0] == 1
        assert float(first.bssid_lat[0]) == 10.0
        assert float(last.bssid_lat[0]) == 30.0

    def test_random_policy_is_seeded(self):
        recs = [
            BssidGeoRecord(parse_mac("AA:BB:CC:00:00:01"), float(i), 0.0, "other")
            for i in range(10)
        ]
        a = ingest_bssid(recs, dedupe="random", seed=7)
        b = ingest_bssid(recs, dedupe="random", seed=7)
        c = ingest_bssid(recs, dedupe="random", seed=8)
        assert float(a.bssid_lat[0]) == float(b.bssid_lat[0])
        # different seed may or may not differ; just require validity
        assert 0.0 <= float(c.bssid_lat[0]) <= 9.0

    def test_out_of_range_rejected(self):
        recs = [
            BssidGeoRecord(parse_mac("AA:BB:CC:00:00:01"), 91.0, 0.0),
            BssidGeoRecord(parse_mac("AA:BB:CC:00:00:02"), 0.0, -180.0),
            BssidGeoRecord(parse_mac("AA:BB:CC:00:00:03"), 45.0, 180.0),
        ]
        idx = ingest_bssid(recs)
        assert idx.bssid_mac.shape[0] == 1
        assert idx.counts["bssid_rejected_range"] == 2

    def test_nic_lists_strictly_sorted(self):
        rng = np.random.default_rng(0)
        recs = [
            BssidGeoRecord(int(m), 1.0, 2.0)
            for m in rng.integers(0, 1 << 48, size=1000, dtype=np.uint64)
        ]
        idx = ingest_bssid(recs)
        for oui in idx.bssid_ouis().tolist():
            nics = idx.bssid_nics(oui)
            assert (np.diff(nics) > 0).all() if nics.shape[0] > 1 else True


class TestCanonicalizeUl:
    def test_alias_added_under_registered_oui(self):
        mac = parse_mac("C2:4A:00:12:34:56")
        idx = ingest_bssid([BssidGeoRecord(mac, 5.0, 6.0, "wigle")])
        out = canonicalize_ul(idx, {parse_oui("C0:4A:00")})
        assert out.bssid_mac.shape[0] == 2
        reg = out.bssid_slice(parse_oui("C0:4A:00"))
        assert format_mac(int(out.bssid_mac[reg.start])) == "C0:4A:00:12:34:56"
        assert bool(out.bssid_alias[reg.start])
        # original retained, unflagged
        orig = out.bssid_slice(parse_oui("C2:4A:00"))
        assert not bool(out.bssid_alias[orig.start])

    def test_registered_oui_unchanged(self):
        mac = parse_mac("C0:4A:00:12:34:56")
        idx = ingest_bssid([BssidGeoRecord(mac, 5.0, 6.0)])
        out = canonicalize_ul(idx, {parse_oui("C0:4A:00")})
        assert out.bssid_mac.shape[0] == 1

    def test_no_registry_is_identity(self):
        idx = ingest_bssid([BssidGeoRecord(parse_mac("C2:4A:00:12:34:56"), 5.0, 6.0)])
        assert canonicalize_ul(idx, None) is idx
        assert canonicalize_ul(idx, set()) is idx

    def test_real_row_wins_over_alias(self):
        recs = [
            BssidGeoRecord(parse_mac("C2:4A:00:12:34:56"), 5.0, 6.0),
            BssidGeoRecord(parse_mac("C0:4A:00:12:34:56"), 7.0, 8.0),
        ]
        idx = ingest_bssid(recs)
        out = canonicalize_ul(idx, {parse_oui("C0:4A:00")})
        assert out.bssid_mac.shape[0] == 2  # no third alias row
        reg = out.bssid_slice(parse_oui("C0:4A:00"))
        assert float(out.bssid_lat[reg.start]) == 7.0


class TestFilesAndPersistence:
    def _write_corpus(self, tmp_path):
        wan = tmp_path / "wan.jsonl"
        lines = []
        for i in range(50):
            mac = parse_mac(f"00:11:22:00:00:{i:02X}")
            addr = encode_eui64(parse_ipv6("2001:db8::"), mac)
            lines.append(json.dumps({"addr": f"{__import__('ipaddress').IPv6Address(addr)}", "asn": 7922, "ts": i}))
        lines.append("this is not json")
        lines.append(json.dumps({"addr": "fe80::1", "asn": 1, "ts": 0}))  # non-EUI-64
        wan.write_text("\n".join(lines) + "\n")

        bssid = tmp_path / "bssid.csv"
        rows = ["bssid,lat,lon,source"]
        for i in range(60):
            rows.append(f"00:11:22:00:00:{i:02X},48.1,11.5,wigle")
        rows.append("zz:bad:mac,1,2,apple")
        rows.append("00:11:22:00:00:01,999,0,apple")
        bssid.write_text("\n".join(rows) + "\n")
        return wan, bssid

    def test_file_ingest_counts(self, tmp_path):
        wan, bssid = self._write_corpus(tmp_path)
        b = CorpusBuilder()
        b.add_wan_file(wan)
        b.add_bssid_file(bssid)
        idx = b.build()
        assert idx.counts["wan_eui64"] == 50
        assert idx.counts["wan_non_eui64"] == 1
        assert idx.counts["wan_malformed"] == 1
        assert idx.counts["bssid_malformed"] == 1
        assert idx.counts["bssid_rejected_range"] == 1
        assert idx.counts["bssid_unique"] == 60

    def test_reingest_is_idempotent(self, tmp_path):
        wan, bssid = self._write_corpus(tmp_path)
        b1 = CorpusBuilder()
        b1.add_wan_file(wan)
        b1.add_bssid_file(bssid)
        once = b1.build()
        b2 = CorpusBuilder()
        b2.add_wan_file(wan)
        b2.add_wan_file(wan)
        b2.add_bssid_file(bssid)
        b2.add_bssid_file(bssid)
        twice = b2.build()
        assert np.array_equal(once.wan_mac, twice.wan_mac)
        assert np.array_equal(once.wan_mult, twice.wan_mult)
        assert np.array_equal(once.wan_ts, twice.wan_ts)
        assert np.array_equal(once.bssid_mac, twice.bssid_mac)
        assert np.array_equal(once.bssid_lat, twice.bssid_lat)

    def test_egix_round_trip(self, tmp_path):
        wan, bssid = self._write_corpus(tmp_path)
        b = CorpusBuilder()
        b.add_wan_file(wan)
        b.add_bssid_file(bssid)
        idx = exclude_multi_as(b.build())
        path = tmp_path / "index.egix"
        save_index(idx, path)
        back = load_index(path)
        for name in (
            "wan_mac",
            "wan_addr_hi",
            "wan_addr_lo",
            "wan_asn",
            "wan_ts",
            "wan_mult",
            "wan_asn_n",
            "bssid_mac",
            "bssid_lat",
            "bssid_lon",
            "bssid_source",
            "bssid_alias",
            "multi_as_excluded",
        ):
            assert np.array_equal(getattr(idx, name), getattr(back, name)), name
        assert back.counts == idx.counts

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.egix"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_index(path)

    def test_csv_wan_reader(self, tmp_path):
        path = tmp_path / "wan.csv"
        path.write_text("addr,asn,ts\n2001:db8::211:22ff:fe33:4455,7922,5\n")
        b = CorpusBuilder()
        b.add_wan_file(path)
        idx = b.build()
        assert idx.wan_mac.shape[0] == 1
        assert format_mac(int(idx.wan_mac[0])) == "00:11:22:33:44:55"
