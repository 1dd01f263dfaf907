from __future__ import annotations

import hashlib
import struct
from typing import Iterable

TAG_STR = b"\x00"
TAG_KIDS = b"\x01"
TAG_NODE = b"\x02"

DIGEST_SIZE = 32


def _h(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def string_hash(s: str) -> bytes:
    """H(TAG_STR || u32-BE byte length || UTF-8 bytes)."""
    raw = s.encode("utf-8")
    return _h(TAG_STR + struct.pack(">I", len(raw)) + raw)


def kids_digest(child_digests: Iterable[bytes]) -> bytes:
    """h^{1->f}: H(TAG_KIDS || h_C1 || ... || h_Cf)."""
    return _h(TAG_KIDS + b"".join(child_digests))


def node_digest_from_parts(lo: str, hi: str, kids: bytes) -> bytes:
    """h_N = H(TAG_NODE || string_hash(N_b) || string_hash(N_e) || h^{1->f})."""
    return _h(TAG_NODE + string_hash(lo) + string_hash(hi) + kids)
