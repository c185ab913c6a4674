"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen at import time: numba is used when it imports cleanly
and the environment variable EUIGEO_NUMBA is not "0". Set EUIGEO_NUMBA=0 to
force the numpy implementations (useful for debugging and for the
benchmark in benchmarks/bench_kernels.py). Both backends are contractually
identical; tests/test_kernels.py asserts bitwise-equal outputs.
"""

from __future__ import annotations

import math
import os

import numpy as np

_ENV = os.environ.get("EUIGEO_NUMBA", "1").strip().lower()
_WANT_NUMBA = _ENV not in ("0", "false", "off", "no")

if _WANT_NUMBA:
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA

EARTH_RADIUS_KM = 6371.0  # mean Earth radius; pi*R = 20015.0866 km


# ---------------------------------------------------------------------------
# offset vote sweep
# ---------------------------------------------------------------------------

def _sweep_votes_numpy(wan: np.ndarray, bssid: np.ndarray, window: int):
    """Nearest below-or-equal and nearest above BSSID per WAN NIC.

    Inputs are strictly ascending int64 arrays. Returns (offsets, wan_pos,
    direction) where direction is 0 for the below-or-equal candidate and 1
    for the above candidate, both restricted to |offset| <= window.
    Vote order: for each WAN NIC in ascending order, below then above.
    """
    n = wan.shape[0]
    if n == 0 or bssid.shape[0] == 0:
        return (
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.uint8),
        )
    hi = np.searchsorted(bssid, wan, side="right")
    lo = hi - 1

    below_ok = lo >= 0
    below_off = np.zeros(n, dtype=np.int64)
    below_off[below_ok] = bssid[lo[below_ok]] - wan[below_ok]
    below_ok &= below_off >= -window

    above_ok = hi < bssid.shape[0]
    above_off = np.zeros(n, dtype=np.int64)
    above_off[above_ok] = bssid[hi[above_ok]] - wan[above_ok]
    above_ok &= above_off <= window

    total = int(below_ok.sum() + above_ok.sum())
    offsets = np.empty(total, dtype=np.int64)
    wan_pos = np.empty(total, dtype=np.int64)
    direction = np.empty(total, dtype=np.uint8)

    # interleave below/above per WAN NIC to keep a defined emission order
    counts = below_ok.astype(np.int64) + above_ok.astype(np.int64)
    ends = np.cumsum(counts)
    starts = ends - counts
    bidx = starts[below_ok]
    offsets[bidx] = below_off[below_ok]
    wan_pos[bidx] = np.nonzero(below_ok)[0]
    direction[bidx] = 0
    aidx = starts + below_ok.astype(np.int64)
    aidx = aidx[above_ok]
    offsets[aidx] = above_off[above_ok]
    wan_pos[aidx] = np.nonzero(above_ok)[0]
    direction[aidx] = 1
    return offsets, wan_pos, direction


def _sweep_votes_py(wan, bssid, window):
    n = wan.shape[0]
    m = bssid.shape[0]
    offsets = np.empty(2 * n, dtype=np.int64)
    wan_pos = np.empty(2 * n, dtype=np.int64)
    direction = np.empty(2 * n, dtype=np.uint8)
    k = 0
    j = 0  # index of first bssid strictly above wan[i]
    for i in range(n):
        w = wan[i]
        while j < m and bssid[j] <= w:
            j += 1
        if j > 0:
            off = bssid[j - 1] - w
            if off >= -window:
                offsets[k] = off
                wan_pos[k] = i
                direction[k] = 0
                k += 1
        if j < m:
            off = bssid[j] - w
            if off <= window:
                offsets[k] = off
                wan_pos[k] = i
                direction[k] = 1
                k += 1
    return offsets[:k], wan_pos[:k], direction[:k]


# ---------------------------------------------------------------------------
# haversine
# ---------------------------------------------------------------------------

def _haversine_km_numpy(lat1, lon1, lat2, lon2):
    """Elementwise great-circle distance in km over degree arrays."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dphi = p2 - p1
    dlam = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(a))


def _haversine_km_py(lat1, lon1, lat2, lon2):
    n = lat1.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        p1 = math.radians(lat1[i])
        p2 = math.radians(lat2[i])
        dphi = p2 - p1
        dlam = math.radians(lon2[i]) - math.radians(lon1[i])
        a = math.sin(dphi / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlam / 2.0) ** 2
        out[i] = 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))
    return out


if HAVE_NUMBA:
    sweep_votes = njit(cache=True)(_sweep_votes_py)
    haversine_km_arrays = njit(cache=True)(_haversine_km_py)
else:
    sweep_votes = _sweep_votes_numpy
    haversine_km_arrays = _haversine_km_numpy

# numpy reference paths are always importable for the benchmark and tests
sweep_votes_numpy = _sweep_votes_numpy
haversine_km_numpy = _haversine_km_numpy
