from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, List, Optional, Tuple, Union

from autoss.core.errors import DBHConstructionError, VOFormatError
from autoss.core.wire import ByteReader, f64, lp_bytes, lp_str, u8, u32
from autoss.domain.model import Mode, StringRange
from autoss.embedding.dbh import Hyperrect
from autoss.index.digest import DIGEST_SIZE

# === Wire tags ===

TAG_GROUP_BEGIN = 0x10
TAG_GROUP_END = 0x11
TAG_STR = 0x12
TAG_MF = 0x13
TAG_DBH_SET = 0x14
TAG_DBH_REF = 0x15
TAG_SHARED_MF = 0x16
TAG_EXEMPT_NODE = 0x17
TAG_EXEMPT_STR = 0x18

RESPONSE_MAGIC = b"VOR1"
MAX_DEPTH = 64


class ExemptSide(IntEnum):
    DISSIMILAR = 0
    SIMILAR = 1


# === Entries ===

@dataclass(frozen=True)
class Str:
    text: str


@dataclass(frozen=True)
class MF:
    """Maximal false-hit subtree: its range in clear plus h^{1->f}."""
    range: StringRange
    kids_digest: bytes


@dataclass(frozen=True)
class DbhRef:
    text: str
    dbh_index: int


@dataclass(frozen=True)
class SharedMF:
    index: int


@dataclass(frozen=True)
class ExemptNode:
    """Subtree already opened in the pivot query's VO and provably dissimilar from it."""
    pivot: int
    digest: bytes


@dataclass(frozen=True)
class ExemptStr:
    text: str
    pivot: int
    side: ExemptSide
    claimed: int


@dataclass(frozen=True)
class Group:
    entries: Tuple["VOEntry", ...]


VOEntry = Union[Str, MF, DbhRef, SharedMF, ExemptNode, ExemptStr, Group]
STRING_ENTRIES = (Str, DbhRef, ExemptStr)
NODE_ENTRIES = (Group, MF, SharedMF, ExemptNode)


@dataclass(frozen=True)
class SharedRect:
    """DbhSet slot pointing into a bundle's shared rectangle table."""
    index: int


DbhItem = Union[Hyperrect, SharedRect]


@dataclass(frozen=True)
class VerificationObject:
    """
    Root entry plus, for E-VS², the trailing DbhSet. dbhs=None means no DbhSet
    is present on the wire.
    """
    root: VOEntry
    dbhs: Optional[Tuple[DbhItem, ...]] = None


def iter_entries(entry: VOEntry) -> Iterator[VOEntry]:
    """Pre-order walk, groups included."""
    yield entry
    if isinstance(entry, Group):
        for child in entry.entries:
            yield from iter_entries(child)


def leaf_entries(entry: VOEntry) -> Iterator[VOEntry]:
    """Non-group entries in wire order."""
    for e in iter_entries(entry):
        if not isinstance(e, Group):
            yield e


# === Encoding ===

def encode_entry(entry: VOEntry) -> bytes:
    if isinstance(entry, Group):
        return (
            u8(TAG_GROUP_BEGIN)
            + b"".join(encode_entry(e) for e in entry.entries)
            + u8(TAG_GROUP_END)
        )
    if isinstance(entry, Str):
        return u8(TAG_STR) + lp_str(entry.text)
    if isinstance(entry, MF):
        return u8(TAG_MF) + lp_str(entry.range.lo) + lp_str(entry.range.hi) + entry.kids_digest
    if isinstance(entry, DbhRef):
        return u8(TAG_DBH_REF) + lp_str(entry.text) + u32(entry.dbh_index)
    if isinstance(entry, SharedMF):
        return u8(TAG_SHARED_MF) + u32(entry.index)
    if isinstance(entry, ExemptNode):
        return u8(TAG_EXEMPT_NODE) + u32(entry.pivot) + entry.digest
    if isinstance(entry, ExemptStr):
        return (
            u8(TAG_EXEMPT_STR)
            + lp_str(entry.text)
            + u32(entry.pivot)
            + u8(int(entry.side))
            + u32(entry.claimed)
        )
    raise TypeError(f"not a VO entry: {entry!r}")


def encode_rect(rect: Hyperrect) -> bytes:
    return u32(rect.dim) + b"".join(f64(v) for v in rect.lo) + b"".join(f64(v) for v in rect.hi)


def encode_dbh_item(item: DbhItem) -> bytes:
    if isinstance(item, SharedRect):
        return u32(0) + u32(item.index)
    return encode_rect(item)


def encode_vo(vo: VerificationObject) -> bytes:
    out = encode_entry(vo.root)
    if vo.dbhs is not None:
        out += u8(TAG_DBH_SET) + u32(len(vo.dbhs)) + b"".join(encode_dbh_item(i) for i in vo.dbhs)
    return out


def vo_size(vo: VerificationObject) -> int:
    return len(encode_vo(vo))


# === Decoding ===

def _vo_error(message: str, offset: int) -> VOFormatError:
    return VOFormatError(message, offset=offset)


def read_entry(reader: ByteReader, depth: int = 0) -> VOEntry:
    if depth > MAX_DEPTH:
        raise reader.fail("VO nesting too deep")
    start = reader.pos
    tag = reader.u8()
    if tag == TAG_GROUP_BEGIN:
        entries: List[VOEntry] = []
        while reader.peek_u8() != TAG_GROUP_END:
            entries.append(read_entry(reader, depth + 1))
        reader.u8()
        if not entries:
            raise VOFormatError("empty group", offset=start)
        return Group(tuple(entries))
    if tag == TAG_STR:
        return Str(reader.lp_str())
    if tag == TAG_MF:
        lo = reader.lp_str()
        hi = reader.lp_str()
        return MF(StringRange(lo, hi), reader.raw(DIGEST_SIZE))
    if tag == TAG_DBH_REF:
        text = reader.lp_str()
        return DbhRef(text, reader.u32())
    if tag == TAG_SHARED_MF:
        return SharedMF(reader.u32())
    if tag == TAG_EXEMPT_NODE:
        pivot = reader.u32()
        return ExemptNode(pivot, reader.raw(DIGEST_SIZE))
    if tag == TAG_EXEMPT_STR:
        text = reader.lp_str()
        pivot = reader.u32()
        side = reader.u8()
        if side not in (ExemptSide.DISSIMILAR, ExemptSide.SIMILAR):
            raise VOFormatError(f"unknown exemption side {side}", offset=start)
        return ExemptStr(text, pivot, ExemptSide(side), reader.u32())
    raise VOFormatError(f"unknown tag 0x{tag:02x}", offset=start)


def read_rect(reader: ByteReader, dim: int) -> Hyperrect:
    start = reader.pos
    lo = tuple(reader.f64() for _ in range(dim))
    hi = tuple(reader.f64() for _ in range(dim))
    if not all(math.isfinite(v) for v in lo + hi):
        raise VOFormatError("non-finite rectangle coordinate", offset=start)
    try:
        return Hyperrect(lo, hi)
    except DBHConstructionError as exc:
        raise VOFormatError(str(exc), offset=start) from exc


def read_dbh_item(reader: ByteReader) -> DbhItem:
    dim = reader.u32()
    if dim == 0:
        return SharedRect(reader.u32())
    if dim * 16 > reader.remaining():
        raise reader.fail(f"rectangle of dimension {dim} exceeds input")
    return read_rect(reader, dim)


def read_vo(reader: ByteReader) -> VerificationObject:
    root = read_entry(reader)
    dbhs: Optional[Tuple[DbhItem, ...]] = None
    if not reader.at_end() and reader.peek_u8() == TAG_DBH_SET:
        reader.u8()
        count = reader.u32()
        if count * 4 > reader.remaining():
            raise reader.fail(f"DbhSet count {count} exceeds input")
        dbhs = tuple(read_dbh_item(reader) for _ in range(count))
    return VerificationObject(root=root, dbhs=dbhs)


def decode_vo(data: bytes) -> VerificationObject:
    reader = ByteReader(data, _vo_error)
    vo = read_vo(reader)
    reader.expect_end()
    return vo


# === Server response envelope ===

_MODE_CODES = {Mode.VS2: 0, Mode.EVS2: 1}
_CODE_MODES = {v: k for k, v in _MODE_CODES.items()}


@dataclass(frozen=True)
class ServerResponse:
    """
    What the server sends back for one query: the result list, the owner's root
    signature and the VO. k is 0 for threshold queries.
    """
    mode: Mode
    theta: float
    results: Tuple[str, ...]
    signature: bytes
    vo: VerificationObject
    k: int = 0


def encode_response(resp: ServerResponse) -> bytes:
    out = [
        RESPONSE_MAGIC,
        u8(_MODE_CODES[resp.mode]),
        u32(resp.k),
        f64(resp.theta),
        u32(len(resp.results)),
    ]
    out.extend(lp_str(s) for s in resp.results)
    out.append(lp_bytes(resp.signature))
    out.append(lp_bytes(encode_vo(resp.vo)))
    return b"".join(out)


def decode_response(data: bytes) -> ServerResponse:
    reader = ByteReader(data, _vo_error)
    if reader.raw(len(RESPONSE_MAGIC)) != RESPONSE_MAGIC:
        raise VOFormatError("bad magic, not a VOR1 response", offset=0)
    code = reader.u8()
    if code not in _CODE_MODES:
        raise VOFormatError(f"unknown mode code {code}", offset=reader.pos - 1)
    k = reader.u32()
    theta = reader.f64()
    if not math.isfinite(theta) or theta < 0:
        raise VOFormatError(f"invalid theta {theta}", offset=reader.pos - 8)
    count = reader.u32()
    if count * 4 > reader.remaining():
        raise reader.fail(f"result count {count} exceeds input")
    results = tuple(reader.lp_str() for _ in range(count))
    signature = reader.lp_bytes()
    vo_start = reader.pos + 4
    vo_bytes = reader.lp_bytes()
    reader.expect_end()
    try:
        vo = decode_vo(vo_bytes)
    except VOFormatError as exc:
        offset = vo_start + exc.offset if exc.offset is not None else None
        raise VOFormatError(exc.reason, offset=offset) from exc
    return ServerResponse(
        mode=_CODE_MODES[code],
        theta=theta,
        results=results,
        signature=signature,
        vo=vo,
        k=k,
    )
