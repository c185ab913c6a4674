"""Command-line surface: decode, ingest, infer, fuse, cluster, compare, synth, report.

Every subcommand reads and writes plain files, echoes the effective
configuration into its JSON artifacts, and never touches the network.
Exit codes: 0 success, 1 input error, 2 configuration error. Errors are
emitted to stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import clusters as cl
from . import corpus, fusion, geo, offsets, synth
from .macaddr import (
    MacFormatError,
    decode_eui64,
    format_mac,
    parse_ipv6,
    parse_mac,
    parse_oui,
)


@dataclass
class PipelineConfig:
    min_wan: int = 100
    min_bssid: int = 100
    min_consistency: float = 0.05
    dedupe_policy: str = "first"
    seed: int = 0
    dispersion_threshold_km: float = 160.0
    prefix_len: int = 48
    strict_ul: bool = False
    threads: int = 0

    def validate(self) -> None:
        if self.min_wan < 0 or self.min_bssid < 0:
            raise ConfigError("thresholds must be nonnegative")
        if not 0.0 <= self.min_consistency <= 1.0:
            raise ConfigError("min_consistency must be in [0, 1]")
        if self.dedupe_policy not in ("first", "random", "last"):
            raise ConfigError(f"unknown dedupe policy {self.dedupe_policy!r}")
        if not 0 < self.prefix_len <= 128:
            raise ConfigError("prefix_len must be in (0, 128]")


class ConfigError(ValueError):
    pass


class InputError(ValueError):
    pass


def _fail(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read config file: {e}") from None
        known = {f.name for f in fields(PipelineConfig)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = PipelineConfig(**{**asdict(cfg), **data})
    # explicit flags override file values
    for name in ("min_wan", "min_bssid", "min_consistency", "seed", "prefix_len", "threads"):
        flag = getattr(args, name, None)
        if flag is not None:
            setattr(cfg, name, flag)
    if getattr(args, "dedupe", None) is not None:
        cfg.dedupe_policy = args.dedupe
    if getattr(args, "threshold_km", None) is not None:
        cfg.dispersion_threshold_km = args.threshold_km
    if getattr(args, "strict_ul", False):
        cfg.strict_ul = True
    cfg.validate()
    if cfg.threads:
        try:
            import numba

            numba.set_num_threads(cfg.threads)
        except (ImportError, ValueError):
            pass
    return cfg


def _out_path(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_decode(args, cfg: PipelineConfig) -> int:
    src = open(args.infile) if args.infile else sys.stdin
    dst = open(args.outfile, "w") if args.outfile else sys.stdout
    skipped = 0
    try:
        for line in src:
            line = line.strip()
            if not line:
                continue
            try:
                mac = decode_eui64(parse_ipv6(line), strict_ul=cfg.strict_ul)
            except ValueError:
                skipped += 1
                continue
            if mac is None:
                skipped += 1
                continue
            dst.write(format_mac(mac) + "\n")
    finally:
        if args.infile:
            src.close()
        if args.outfile:
            dst.close()
    if skipped:
        _fail("non_eui64", f"{skipped} lines without an embedded MAC")
    return 0


def cmd_ingest(args, cfg: PipelineConfig) -> int:
    builder = corpus.CorpusBuilder(strict_ul=cfg.strict_ul)
    if not args.wan and not args.bssid:
        raise InputError("ingest needs --wan and/or --bssid")
    for path in args.wan or []:
        builder.add_wan_file(path)
    for path in args.bssid or []:
        builder.add_bssid_file(path)
    index = builder.build(dedupe=cfg.dedupe_policy, seed=cfg.seed)
    index = corpus.exclude_multi_as(index)
    if args.registry:
        index = corpus.canonicalize_ul(index, corpus.read_oui_registry(args.registry))
    corpus.save_index(index, _out_path(args, "index.egix"))
    with open(_out_path(args, "ingest_report.json"), "w") as fh:
        json.dump({"counts": index.counts, "config": asdict(cfg)}, fh, indent=2)
        fh.write("\n")
    return 0


def cmd_infer(args, cfg: PipelineConfig) -> int:
    index = corpus.load_index(args.index)
    models = offsets.infer_all(index, min_wan=cfg.min_wan, min_bssid=cfg.min_bssid)
    kept = offsets.filter_models(models, min_consistency=cfg.min_consistency)
    offsets.write_models_jsonl(kept, _out_path(args, "models.jsonl"))
    _write_distribution_csv(
        _out_path(args, "offset_cdf.csv"), "offset", [m.offset for m in kept]
    )
    _write_distribution_csv(
        _out_path(args, "alloc_cdf.csv"), "alloc_size", [m.alloc.alloc_size for m in kept]
    )
    with open(_out_path(args, "infer_report.json"), "w") as fh:
        json.dump(
            {
                "ouis_considered": len(models),
                "ouis_kept": len(kept),
                "config": asdict(cfg),
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    return 0


def _write_distribution_csv(path, name, values) -> None:
    vals, counts = np.unique(np.asarray(values, dtype=np.int64), return_counts=True)
    total = counts.sum()
    cum = np.cumsum(counts)
    with open(path, "w") as fh:
        fh.write(f"{name},count,cum_fraction\n")
        for v, c, s in zip(vals, counts, cum):
            fh.write(f"{v},{c},{s / total:.6f}\n" if total else "")


def cmd_fuse(args, cfg: PipelineConfig) -> int:
    index = corpus.load_index(args.index)
    models = offsets.read_models_jsonl(args.models)
    rows, stats = fusion.fuse(index, models)
    if args.format in ("jsonl", None):
        fusion.write_fused_jsonl(rows, _out_path(args, "fused.jsonl"))
    elif args.format == "geojson":
        fusion.write_fused_geojson(rows, _out_path(args, "fused.geojson"))
    else:
        raise ConfigError(f"fuse cannot write format {args.format!r}")
    with open(_out_path(args, "fusion_stats.json"), "w") as fh:
        json.dump(fusion.stats_to_dict(stats, asdict(cfg)), fh, indent=2)
        fh.write("\n")
    return 0


def _read_fused_jsonl(path) -> list[fusion.GeolocatedCpe]:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            rows.append(
                fusion.GeolocatedCpe(
                    wan_mac=parse_mac(obj["wan_mac"]),
                    source_addr=parse_ipv6(obj["addr"]),
                    predicted_bssid=parse_mac(obj["bssid"]),
                    lat=float(obj["lat"]),
                    lon=float(obj["lon"]),
                    model_confidence=float(obj.get("confidence", 0.0)),
                    geo_source=obj.get("source", "other"),
                    ul_alias=bool(obj.get("ul_alias", False)),
                )
            )
    return rows


def cmd_cluster(args, cfg: PipelineConfig) -> int:
    traces = cl.read_traces_jsonl(args.traces)
    geos = _read_fused_jsonl(args.fused)
    built = cl.build_clusters(traces, geos, threshold_km=cfg.dispersion_threshold_km)
    with open(_out_path(args, "clusters.geojson"), "w") as fh:
        json.dump(cl.clusters_geojson(built), fh)
        fh.write("\n")
    with open(_out_path(args, "clusters.json"), "w") as fh:
        json.dump(cl.cluster_summary(built, asdict(cfg)), fh, indent=2)
        fh.write("\n")
    inferred = []
    if args.targets:
        located = {g.source_addr for g in geos}
        with open(args.targets) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                target = parse_ipv6(line)
                if target in located:
                    continue
                loc = cl.infer_noneui_location(
                    target, built, traces, prefix_len=cfg.prefix_len
                )
                if loc is not None:
                    inferred.append(loc)
    cl.write_inferred_jsonl(inferred, _out_path(args, "inferred.jsonl"))
    return 0


def _read_points_file(path) -> dict[str, geo.GeoPoint]:
    out = {}
    with open(path) as fh:
        head = fh.readline()
        if not head:
            return out
        rest = [head] + fh.readlines()
    if head.lstrip().startswith("{"):
        for line in rest:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out[str(obj["key"])] = geo.GeoPoint(float(obj["lat"]), float(obj["lon"]))
    else:
        for row in csv.reader(rest):
            if not row or row[0] == "key":
                continue
            out[row[0]] = geo.GeoPoint(float(row[1]), float(row[2]))
    return out


def cmd_compare(args, cfg: PipelineConfig) -> int:
    a = _read_points_file(args.a)
    b = _read_points_file(args.b)
    report = geo.compare_sources(a, b)
    geo.write_report_csv(report, _out_path(args, "distances.csv"))
    geo.write_report_summary(report, _out_path(args, "compare_summary.json"), asdict(cfg))
    return 0


def cmd_synth(args, cfg: PipelineConfig) -> int:
    if args.spec:
        with open(args.spec) as fh:
            spec = json.load(fh)
        profiles = [_profile_from_dict(p) for p in spec.get("profiles", [])]
        topology = [_site_from_dict(s) for s in spec.get("topology", [])] or None
        noneui = float(spec.get("noneui_fraction", 0.0))
    else:
        profiles = synth.paper_suite_profiles()
        topology = synth.demo_topology()
        noneui = 0.0
    result = synth.generate(profiles, topology, seed=cfg.seed, noneui_fraction=noneui)
    if args.noise_random_iid or args.noise_multi_as:
        result = synth.inject_noise(
            result,
            random_iid_count=args.noise_random_iid or 0,
            multi_as_rate=args.noise_multi_as or 0.0,
            seed=cfg.seed,
        )
    paths = result.write(args.out)
    with open(_out_path(args, "synth_report.json"), "w") as fh:
        json.dump(
            {
                "devices": result.ledger.device_count(),
                "files": paths,
                "planted": {
                    f"{oui:06X}": {"alloc": a, "offset": o}
                    for oui, (a, o) in result.ledger.planted.items()
                },
                "config": asdict(cfg),
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    return 0


def _profile_from_dict(obj: dict) -> synth.VendorProfile:
    return synth.VendorProfile(
        oui=parse_oui(obj["oui"]) if isinstance(obj["oui"], str) else int(obj["oui"]),
        alloc_size=int(obj["alloc_size"]),
        wan_index=int(obj["wan_index"]),
        bssid_indices=tuple(obj["bssid_indices"]),
        device_count=int(obj["device_count"]),
        wan_obs_prob=float(obj.get("wan_obs_prob", 1.0)),
        bssid_obs_prob=float(obj.get("bssid_obs_prob", 1.0)),
        bssid_obs_probs=tuple(obj["bssid_obs_probs"]) if obj.get("bssid_obs_probs") else None,
        primary_bssid=obj.get("primary_bssid"),
        split_oui=parse_oui(obj["split_oui"]) if obj.get("split_oui") else None,
        start_nic=int(obj.get("start_nic", 0)),
        gap_choices=tuple(obj.get("gap_choices", (0,))),
        gap_weights=tuple(obj["gap_weights"]) if obj.get("gap_weights") else None,
    )


def _site_from_dict(obj: dict) -> synth.RouterSite:
    return synth.RouterSite(
        name=str(obj["name"]),
        center=geo.GeoPoint(float(obj["lat"]), float(obj["lon"])),
        dispersion_km=float(obj.get("dispersion_km", 5.0)),
        prefix48=int(obj["prefix48"], 16) if isinstance(obj["prefix48"], str) else int(obj["prefix48"]),
        penultimate=parse_ipv6(obj["penultimate"]),
        asn=int(obj.get("asn", 64512)),
    )


def cmd_report(args, cfg: PipelineConfig) -> int:
    rows = _read_fused_jsonl(args.fused)
    country = {}
    if args.country_map:
        with open(args.country_map) as fh:
            for raw in csv.reader(fh):
                if len(raw) >= 2 and raw[0] != "mac":
                    try:
                        country[parse_mac(raw[0])] = raw[1].strip()
                    except MacFormatError:
                        continue
    by_country: dict[str, int] = {}
    by_oui: dict[str, int] = {}
    for r in rows:
        c = country.get(r.wan_mac, "??")
        by_country[c] = by_country.get(c, 0) + 1
        o = format_mac(r.wan_mac)[:8]
        by_oui[o] = by_oui.get(o, 0) + 1
    total = len(rows)

    def table(d):
        items = sorted(d.items(), key=lambda kv: (-kv[1], kv[0]))
        return [
            {"key": k, "count": v, "fraction": v / total if total else 0.0}
            for k, v in items
        ]

    with open(_out_path(args, "report.json"), "w") as fh:
        json.dump(
            {
                "total": total,
                "by_country": table(by_country),
                "by_oui": table(by_oui),
                "config": asdict(cfg),
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="euigeo", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--min-wan", dest="min_wan", type=int)
        p.add_argument("--min-bssid", dest="min_bssid", type=int)
        p.add_argument("--min-consistency", dest="min_consistency", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--strict-ul", dest="strict_ul", action="store_true", default=False)
        p.add_argument("--dedupe", choices=("first", "random", "last"))
        p.add_argument("--threshold-km", dest="threshold_km", type=float)
        p.add_argument("--prefix-len", dest="prefix_len", type=int)

    p = sub.add_parser("decode", help="IPv6 lines to embedded-MAC lines")
    p.add_argument("--in", dest="infile")
    p.add_argument("--out", dest="outfile")
    common(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("ingest", help="build and persist the corpus index")
    p.add_argument("--wan", action="append", help="WAN corpus file (jsonl or csv)")
    p.add_argument("--bssid", action="append", help="BSSID corpus file (jsonl or csv)")
    p.add_argument("--registry", help="registered-OUI list for U/L aliasing")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("infer", help="per-OUI allocation and offset models")
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("fuse", help="predict BSSIDs and join geolocations")
    p.add_argument("--index", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("jsonl", "geojson"))
    common(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("cluster", help="penultimate-hop clustering")
    p.add_argument("--traces", required=True)
    p.add_argument("--fused", required=True)
    p.add_argument("--targets", help="IPv6 targets to locate indirectly")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("compare", help="distance report between two location maps")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    p.add_argument("--spec", help="JSON generator spec (profiles/topology)")
    p.add_argument("--noise-random-iid", type=int, default=0)
    p.add_argument("--noise-multi-as", type=float, default=0.0)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="country/OUI tabulation of fused output")
    p.add_argument("--fused", required=True)
    p.add_argument("--country-map", dest="country_map", help="CSV mac,country")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_report)

    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
    except ConfigError as e:
        _fail("config", str(e))
        return 2
    try:
        return args.func(args, cfg)
    except (ConfigError,) as e:
        _fail("config", str(e))
        return 2
    except (InputError, OSError, ValueError, KeyError) as e:
        _fail("input", f"{type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
