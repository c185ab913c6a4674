"""48-bit MAC address and EUI-64 interface-identifier primitives.

MAC addresses and OUIs are plain ints throughout the package; these
helpers own parsing, formatting, and the bit-exact EUI-64 embedding rules.
All scalar functions are pure. Bulk (numpy) variants operate on uint64
arrays of interface identifiers and are used on the corpus-scale paths.
"""

from __future__ import annotations

import ipaddress

import numpy as np

MAC_MAX = 1 << 48
OUI_MAX = 1 << 24
NIC_MASK = 0xFFFFFF

UL_BIT = 0x0200_0000_0000  # universal/local bit of the first octet
UL_BIT_OUI = 0x020000

_EUI64_MARKER = 0xFFFE
_IID_MASK = (1 << 64) - 1


class MacFormatError(ValueError):
    """Raised for text that does not parse as a MAC-48 or OUI."""


def parse_mac(text: str) -> int:
    """Parse `AA:BB:CC:DD:EE:FF` (case-insensitive, `:` or `-`) to an int."""
    raw = text.strip().replace("-", ":")
    parts = raw.split(":")
    if len(parts) != 6 or not all(1 <= len(p) <= 2 for p in parts):
        raise MacFormatError(f"not a MAC-48: {text!r}")
    try:
        value = 0
        for p in parts:
            value = (value << 8) | int(p, 16)
    except ValueError:
        raise MacFormatError(f"not a MAC-48: {text!r}") from None
    return value


def format_mac(value: int) -> str:
    """Canonical uppercase colon form, e.g. `00:1D:D1:00:00:0E`."""
    if not 0 <= value < MAC_MAX:
        raise MacFormatError(f"MAC out of range: {value:#x}")
    b = value.to_bytes(6, "big")
    return ":".join(f"{x:02X}" for x in b)


def parse_oui(text: str) -> int:
    raw = text.strip().replace("-", ":")
    parts = raw.split(":")
    if len(parts) != 3 or not all(1 <= len(p) <= 2 for p in parts):
        raise MacFormatError(f"not an OUI: {text!r}")
    try:
        value = 0
        for p in parts:
            value = (value << 8) | int(p, 16)
    except ValueError:
        raise MacFormatError(f"not an OUI: {text!r}") from None
    return value


def format_oui(value: int) -> str:
    if not 0 <= value < OUI_MAX:
        raise MacFormatError(f"OUI out of range: {value:#x}")
    b = value.to_bytes(3, "big")
    return ":".join(f"{x:02X}" for x in b)


def oui_of(mac: int) -> int:
    return mac >> 24


def nic_of(mac: int) -> int:
    return mac & NIC_MASK


def flip_ul(mac: int) -> int:
    """Invert the universal/local bit (0x02 of the first octet)."""
    return mac ^ UL_BIT


def flip_ul_oui(oui: int) -> int:
    return oui ^ UL_BIT_OUI


def mac_add(mac: int, delta: int) -> int | None:
    """Add a signed offset, staying within the OUI; None on over/underflow."""
    value = mac + delta
    if value < 0 or value >= MAC_MAX or (value >> 24) != (mac >> 24):
        return None
    return value


# ---------------------------------------------------------------------------
# IPv6 / EUI-64
# ---------------------------------------------------------------------------

def parse_ipv6(text: str) -> int:
    return int(ipaddress.IPv6Address(text.strip()))

def format_ipv6(value: int) -> str:
    return str(ipaddress.IPv6Address(value))


def iid_of(addr: int) -> int:
    """Lower 64 bits (the interface identifier)."""
    return addr & _IID_MASK


def is_eui64_iid(iid: int, strict_ul: bool = False) -> bool:
    """True when IID bytes 4-5 are the 0xFFFE marker.

    strict_ul additionally requires the universal/local bit of the first
    IID byte to be set, halving the false-positive rate on random IIDs.
    """
    if (iid >> 24) & 0xFFFF != _EUI64_MARKER:
        return False
    if strict_ul and not (iid >> 56) & 0x02:
        return False
    return True


def decode_eui64(addr: int, strict_ul: bool = False) -> int | None:
    """Extract the embedded MAC from an EUI-64 address, else None.

    Removes the 0xFFFE marker bytes from the IID and inverts the U/L bit
    of the leading octet.
    """
    iid = addr & _IID_MASK
    if not is_eui64_iid(iid, strict_ul):
        return None
    mac = ((iid >> 16) & 0xFFFFFF000000) | (iid & NIC_MASK)
    return mac ^ UL_BIT


def encode_eui64(prefix: int, mac: int) -> int:
    """Embed a MAC into the IID under the given /64 prefix.

    Only the upper 64 bits of `prefix` are used. Inverse of decode_eui64.
    """
    flipped = mac ^ UL_BIT
    iid = ((flipped >> 24) << 40) | (_EUI64_MARKER << 24) | (flipped & NIC_MASK)
    return (prefix & ~_IID_MASK) | iid


# ---------------------------------------------------------------------------
# bulk (numpy) variants
# ---------------------------------------------------------------------------

def eui64_marker_mask(iids: np.ndarray, strict_ul: bool = False) -> np.ndarray:
    """Boolean mask of IIDs carrying the 0xFFFE marker (uint64 array in)."""
    iids = np.asarray(iids, dtype=np.uint64)
    mask = ((iids >> np.uint64(24)) & np.uint64(0xFFFF)) == np.uint64(_EUI64_MARKER)
    if strict_ul:
        mask &= ((iids >> np.uint64(56)) & np.uint64(0x02)) != 0
    return mask


def decode_eui64_iids(iids: np.ndarray, strict_ul: bool = False):
    """Vectorized decode: returns (macs, mask); macs valid where mask holds."""
    iids = np.asarray(iids, dtype=np.uint64)
    mask = eui64_marker_mask(iids, strict_ul)
    macs = ((iids >> np.uint64(16)) & np.uint64(0xFFFFFF000000)) | (iids & np.uint64(NIC_MASK))
    macs ^= np.uint64(UL_BIT)
    return macs, mask


def encode_eui64_iids(macs: np.ndarray) -> np.ndarray:
    """Vectorized inverse of decode_eui64_iids over uint64 MAC values."""
    macs = np.asarray(macs, dtype=np.uint64)
    flipped = macs ^ np.uint64(UL_BIT)
    return (
        ((flipped >> np.uint64(24)) << np.uint64(40))
        | np.uint64(_EUI64_MARKER << 24)
        | (flipped & np.uint64(NIC_MASK))
    )
