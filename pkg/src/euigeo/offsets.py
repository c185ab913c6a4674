"""Per-OUI MAC allocation-size and WAN-to-BSSID offset inference.

Device vendors assign each unit a contiguous block of MAC addresses, so
the sorted BSSIDs of an OUI show a modal intra-address distance equal to
the block size. Given that size, every WAN MAC votes for its nearest
BSSID below-or-equal and nearest above (within +/- one block); the modal
vote is the OUI's offset. Vote counts at the offset plus or minus
multiples of the block size are harmonics: matches against a neighboring
device rather than the unit itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import sweep_votes
from .corpus import CorpusIndex
from .macaddr import format_oui, parse_oui


class InsufficientData(ValueError):
    """Fewer observations than the operation can work with."""


class EmptyVotes(ValueError):
    """No offset votes were collected for the OUI."""


@dataclass(frozen=True)
class AllocInference:
    oui: int
    alloc_size: int
    consistency: float  # fraction of intra-BSSID distances divisible by alloc_size
    sample_count: int


@dataclass(frozen=True)
class OffsetVote:
    wan_nic: int
    offset: int
    direction: str  # "below" | "above"


@dataclass(frozen=True)
class OuiOffsetModel:
    oui: int
    alloc: AllocInference
    offset: int
    confidence: float
    votes: dict[int, int]
    wan_count: int
    bssid_count: int


@dataclass(frozen=True)
class OffsetPmf:
    probs: dict[int, float]
    winner: int
    harmonics: frozenset[int]


def infer_alloc_size(bssid_nics, oui: int = 0) -> AllocInference:
    """Modal successive distance between sorted BSSID NICs, ties to smallest.

    Consistency is the fraction of distances that are exact multiples of
    the winner (equivalently gcd(d, alloc) == alloc).
    """
    nics = np.asarray(bssid_nics, dtype=np.int64)
    if nics.shape[0] < 2:
        raise InsufficientData(f"need >=2 BSSIDs, got {nics.shape[0]}")
    diffs = np.diff(nics)
    values, freq = np.unique(diffs, return_counts=True)
    alloc = int(values[int(np.argmax(freq))])  # first max = smallest value
    consistency = float(np.mean(diffs % alloc == 0))
    return AllocInference(
        oui=oui, alloc_size=alloc, consistency=consistency, sample_count=int(diffs.shape[0])
    )


def collect_votes(wan_nics, bssid_nics, window: int):
    """Offset votes as raw arrays: (offsets, wan_positions, directions).

    For each WAN NIC: nearest BSSID below-or-equal and nearest strictly
    above, each only when |offset| <= window. Directions: 0 below, 1 above.
    """
    wan = np.ascontiguousarray(wan_nics, dtype=np.int64)
    bssid = np.ascontiguousarray(bssid_nics, dtype=np.int64)
    return sweep_votes(wan, bssid, np.int64(window))


def collect_vote_records(wan_nics, bssid_nics, window: int) -> list[OffsetVote]:
    offsets, wan_pos, direction = collect_votes(wan_nics, bssid_nics, window)
    wan = np.asarray(wan_nics, dtype=np.int64)
    return [
        OffsetVote(int(wan[p]), int(o), "below" if d == 0 else "above")
        for o, p, d in zip(offsets, wan_pos, direction)
    ]


def _modal_offset(values: np.ndarray, freq: np.ndarray) -> int:
    # most votes; ties -> smaller |offset|, then the positive one
    best = None
    for v, c in zip(values.tolist(), freq.tolist()):
        key = (-c, abs(v), -v)
        if best is None or key < best[0]:
            best = (key, v)
    return best[1]


def infer_offset(
    oui: int,
    index: CorpusIndex,
    min_wan: int = 100,
    min_bssid: int = 100,
) -> OuiOffsetModel | None:
    """Full per-OUI inference; None below the observation thresholds."""
    wan = index.wan_nics(oui)
    bssid = index.bssid_nics(oui)
    if wan.shape[0] < min_wan or bssid.shape[0] < min_bssid:
        return None
    alloc = infer_alloc_size(bssid, oui=oui)
    offsets, wan_pos, _dirs = collect_votes(wan, bssid, alloc.alloc_size)
    if offsets.shape[0] == 0:
        return OuiOffsetModel(
            oui=oui,
            alloc=alloc,
            offset=0,
            confidence=0.0,
            votes={},
            wan_count=int(wan.shape[0]),
            bssid_count=int(bssid.shape[0]),
        )
    values, freq = np.unique(offsets, return_counts=True)
    offset = _modal_offset(values, freq)

    # confidence: voting WAN MACs with >=1 vote congruent to the winner
    consistent = (offsets - offset) % alloc.alloc_size == 0
    voters = np.unique(wan_pos)
    good = np.unique(wan_pos[consistent])
    confidence = float(good.shape[0] / voters.shape[0])
    return OuiOffsetModel(
        oui=oui,
        alloc=alloc,
        offset=int(offset),
        confidence=confidence,
        votes={int(v): int(c) for v, c in zip(values, freq)},
        wan_count=int(wan.shape[0]),
        bssid_count=int(bssid.shape[0]),
    )


def infer_all(
    index: CorpusIndex,
    min_wan: int = 100,
    min_bssid: int = 100,
) -> list[OuiOffsetModel]:
    """Run inference over every OUI present in both corpora."""
    wan_ouis = set(index.wan_ouis().tolist())
    bssid_ouis = set(index.bssid_ouis().tolist())
    models = []
    for oui in sorted(wan_ouis & bssid_ouis):
        try:
            model = infer_offset(oui, index, min_wan=min_wan, min_bssid=min_bssid)
        except InsufficientData:
            continue
        if model is not None:
            models.append(model)
    return models


def filter_models(models, min_consistency: float = 0.05) -> list[OuiOffsetModel]:
    """Drop low-confidence models; the bound is inclusive."""
    return [m for m in models if m.confidence >= min_consistency]


def offset_pmf(model: OuiOffsetModel) -> OffsetPmf:
    """Normalized vote histogram with harmonic offsets tagged.

    Harmonics are votes displaced from the winner by whole allocation
    blocks - matches to an adjacent device, not contradicting evidence.
    """
    if not model.votes:
        raise EmptyVotes(f"no votes for OUI {format_oui(model.oui)}")
    total = sum(model.votes.values())
    probs = {v: c / total for v, c in model.votes.items()}
    alloc = model.alloc.alloc_size
    harmonics = frozenset(
        v for v in model.votes if v != model.offset and (v - model.offset) % alloc == 0
    )
    return OffsetPmf(probs=probs, winner=model.offset, harmonics=harmonics)


# ---------------------------------------------------------------------------
# model serialization
# ---------------------------------------------------------------------------

def model_to_dict(model: OuiOffsetModel) -> dict:
    return {
        "oui": format_oui(model.oui),
        "alloc": model.alloc.alloc_size,
        "offset": model.offset,
        "confidence": model.confidence,
        "wan_count": model.wan_count,
        "bssid_count": model.bssid_count,
        "votes": {str(v): c for v, c in sorted(model.votes.items())},
        "alloc_consistency": model.alloc.consistency,
        "alloc_samples": model.alloc.sample_count,
    }


def model_from_dict(obj: dict) -> OuiOffsetModel:
    oui = parse_oui(obj["oui"])
    alloc = AllocInference(
        oui=oui,
        alloc_size=int(obj["alloc"]),
        consistency=float(obj.get("alloc_consistency", math.nan)),
        sample_count=int(obj.get("alloc_samples", 0)),
    )
    return OuiOffsetModel(
        oui=oui,
        alloc=alloc,
        offset=int(obj["offset"]),
        confidence=float(obj["confidence"]),
        votes={int(k): int(v) for k, v in obj.get("votes", {}).items()},
        wan_count=int(obj.get("wan_count", 0)),
        bssid_count=int(obj.get("bssid_count", 0)),
    )


def write_models_jsonl(models, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for m in models:
            fh.write(json.dumps(model_to_dict(m)) + "\n")


def read_models_jsonl(path) -> list[OuiOffsetModel]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(model_from_dict(json.loads(line)))
    return out
