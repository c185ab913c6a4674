"""EUI-64 WAN-MAC decoding, offset inference, and BSSID geolocation fusion."""

from ._kernels import USING_NUMBA
from .corpus import (
    BssidGeoRecord,
    CorpusBuilder,
    CorpusIndex,
    WanMacRecord,
    canonicalize_ul,
    exclude_multi_as,
    ingest_bssid,
    ingest_wan,
    load_index,
    save_index,
)
from .macaddr import (
    decode_eui64,
    encode_eui64,
    flip_ul,
    format_mac,
    mac_add,
    parse_ipv6,
    parse_mac,
)
from .offsets import (
    AllocInference,
    OuiOffsetModel,
    collect_votes,
    filter_models,
    infer_alloc_size,
    infer_all,
    infer_offset,
    offset_pmf,
)
from .fusion import FusionStats, GeolocatedCpe, fuse, predict_bssid
from .geo import DistanceReport, GeoPoint, centroid, compare_sources, coverage_radius, geodesic_km
from .clusters import (
    InferredLocation,
    RouterCluster,
    TraceRecord,
    build_clusters,
    coverage_gain,
    evaluate_against_reported,
    extract_penultimate,
    infer_noneui_location,
)
from .synth import GroundTruthLedger, RouterSite, SynthResult, VendorProfile, generate, inject_noise

__version__ = "0.1.0"
