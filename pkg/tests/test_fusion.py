"""BSSID prediction and geolocation join, checked against a generator ledger."""

import json

import numpy as np
import pytest

from euigeo.corpus import (
    BssidGeoRecord,
    CorpusBuilder,
    canonicalize_ul,
    index_from_arrays,
)
from euigeo.fusion import (
    OuiMismatch,
    cpe_to_dict,
    fuse,
    fused_geojson,
    predict_bssid,
    write_fused_jsonl,
)
from euigeo.macaddr import encode_eui64, format_mac, parse_ipv6, parse_mac, parse_oui
from euigeo.offsets import AllocInference, OuiOffsetModel, infer_all
from euigeo.synth import VendorProfile, generate

OUI = 0x001DD1


def model(oui=OUI, alloc=16, offset=-2, confidence=1.0):
    return OuiOffsetModel(
        oui=oui,
        alloc=AllocInference(oui, alloc, 1.0, 10),
        offset=offset,
        confidence=confidence,
        votes={offset: 10},
        wan_count=100,
        bssid_count=100,
    )


class TestPredict:
    def test_negative_offset(self):
        got = predict_bssid(parse_mac("00:1D:D1:00:00:10"), model(offset=-2))
        assert format_mac(got) == "00:1D:D1:00:00:0E"

    def test_zero_offset_identity(self):
        mac = parse_mac("00:1D:D1:12:34:56")
        assert predict_bssid(mac, model(offset=0)) == mac

    def test_underflow_absent(self):
        assert predict_bssid(parse_mac("00:1D:D1:00:00:01"), model(offset=-2)) is None

    def test_oui_mismatch(self):
        with pytest.raises(OuiMismatch):
            predict_bssid(parse_mac("AA:BB:CC:00:00:10"), model())


class TestFuse:
    def _ledgered_corpus(self):
        prof = VendorProfile(
            oui=OUI,
            alloc_size=16,
            wan_index=2,
            bssid_indices=(0,),
            device_count=1000,
            wan_obs_prob=1.0,
            bssid_obs_prob=0.6,
            gap_choices=(0, 7),
            gap_weights=(0.6, 0.4),
        )
        res = generate([prof], seed=13)
        return res, res.build_index()

    def test_matches_equal_ledger(self):
        res, idx = self._ledgered_corpus()
        models = infer_all(idx)
        assert len(models) == 1 and models[0].offset == -2
        rows, stats = fuse(idx, models)
        pl = res.ledger.profiles[0]
        expected = int(pl.bssid_observed[:, 0].sum())  # wan fully observed
        assert stats.matched == expected == len(rows)
        # coordinates propagate bit for bit
        geo_by_bssid = {
            int(m): (float(lat), float(lon))
            for m, lat, lon in zip(pl.bssid_mac[:, 0], pl.lat, pl.lon)
        }
        for r in rows:
            lat, lon = geo_by_bssid[r.predicted_bssid]
            assert r.lat == lat and r.lon == lon

    def test_counts_reconcile(self):
        _, idx = self._ledgered_corpus()
        rows, stats = fuse(idx, infer_all(idx))
        assert stats.matched <= stats.predicted <= stats.eligible
        assert stats.eligible == stats.matched + stats.unmatched + stats.overflow_absent
        assert stats.eligible == idx.wan_mac.shape[0]
        assert stats.no_model == 0

    def test_empty_models(self):
        _, idx = self._ledgered_corpus()
        rows, stats = fuse(idx, [])
        assert rows == []
        assert stats.eligible == 0
        assert stats.no_model == idx.wan_mac.shape[0]
        assert stats.match_rate == 0.0

    def test_output_order_is_oui_then_nic(self):
        base1 = 0x001122 << 24
        base2 = 0xA0B0C0 << 24
        wan = np.array([base2 + 5, base1 + 9, base1 + 3], dtype=np.uint64)
        bssid = np.array([base2 + 5, base1 + 9, base1 + 3], dtype=np.uint64)
        idx = index_from_arrays(wan, bssid)
        rows, _ = fuse(idx, [model(oui=0x001122, offset=0), model(oui=0xA0B0C0, offset=0)])
        macs = [r.wan_mac for r in rows]
        assert macs == sorted(macs)

    def test_shard_concatenation_equals_union(self):
        res, idx = self._ledgered_corpus()
        prof2 = VendorProfile(
            oui=0xE0286D, alloc_size=7, wan_index=0, bssid_indices=(6,), device_count=500,
            bssid_obs_prob=0.5,
        )
        res2 = generate([prof2], seed=14)
        b = CorpusBuilder()
        for r in (res, res2):
            for addr, asn, ts in r.wan_records():
                b.add_wan(addr, asn, ts)
            for mac, lat, lon, src in r.bssid_records():
                b.add_bssid(mac, lat, lon, src)
        union = b.build()
        models = infer_all(union)
        union_rows, union_stats = fuse(union, models)

        shard_rows = []
        for oui in (0x001DD1, 0xE0286D):
            shard = index_from_arrays(
                union.wan_mac[union.wan_slice(oui)],
                union.bssid_mac[union.bssid_slice(oui)],
                union.bssid_lat[union.bssid_slice(oui)],
                union.bssid_lon[union.bssid_slice(oui)],
            )
            rows, _ = fuse(shard, models)
            shard_rows.extend(rows)
        assert [r.wan_mac for r in shard_rows] == [r.wan_mac for r in union_rows]
        assert [(r.predicted_bssid, r.lat, r.lon) for r in shard_rows] == [
            (r.predicted_bssid, r.lat, r.lon) for r in union_rows
        ]

    def test_ul_alias_match_is_flagged(self):
        reg_oui = parse_oui("C0:4A:00")
        b = CorpusBuilder()
        wan_mac = parse_mac("C0:4A:00:00:01:10")
        b.add_wan(encode_eui64(parse_ipv6("2001:db8::"), wan_mac))
        # the radio broadcasts with the U/L bit inverted
        b.add_bssid_record(BssidGeoRecord(parse_mac("C2:4A:00:00:01:0E"), 50.1, 8.6, "wigle"))
        idx = canonicalize_ul(b.build(), {reg_oui})
        rows, stats = fuse(idx, [model(oui=reg_oui, offset=-2)])
        assert stats.matched == 1
        assert rows[0].ul_alias is True
        assert format_mac(rows[0].predicted_bssid) == "C0:4A:00:00:01:0E"
        assert rows[0].lat == 50.1


class TestSerialization:
    def _rows(self):
        _, idx = TestFuse()._ledgered_corpus()
        rows, _ = fuse(idx, infer_all(idx))
        return rows[:5]

    def test_jsonl_shape(self, tmp_path):
        rows = self._rows()
        path = tmp_path / "fused.jsonl"
        write_fused_jsonl(rows, path)
        lines = [json.loads(x) for x in path.read_text().splitlines()]
        assert len(lines) == 5
        for key in ("wan_mac", "addr", "bssid", "lat", "lon", "confidence", "source", "ul_alias"):
            assert key in lines[0]
        assert lines[0]["source"] == "synthetic"

    def test_geojson_features(self):
        rows = self._rows()
        fc = fused_geojson(rows)
        assert fc["type"] == "FeatureCollection"
        feat = fc["features"][0]
        assert feat["geometry"]["type"] == "Point"
        lon, lat = feat["geometry"]["coordinates"]
        assert lat == rows[0].lat and lon == rows[0].lon

    def test_round_numbers_preserved(self):
        d = cpe_to_dict(self._rows()[0])
        assert isinstance(d["lat"], float) and isinstance(d["ul_alias"], bool)
