from __future__ import annotations

from pathlib import Path
from typing import List

from autoss.core.config import logger
from autoss.core.errors import EmptyDatasetError, IngestError
from autoss.domain.metrics import sort_corpus
from autoss.domain.model import CorpusString


def parse_corpus(data: bytes) -> List[CorpusString]:
    """
    Newline-delimited UTF-8. Trailing CR is stripped, empty lines dropped, the
    first occurrence of a duplicate kept. The corpus comes back φ-sorted with
    ids equal to the rank.
    """
    seen = set()
    unique: List[str] = []
    for lineno, raw in enumerate(data.split(b"\n"), start=1):
        if raw.endswith(b"\r"):
            raw = raw[:-1]
        if not raw:
            continue
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IngestError(f"invalid UTF-8 at column {exc.start + 1}", line=lineno) from exc
        if text in seen:
            continue
        seen.add(text)
        unique.append(text)
    return [CorpusString(id=i, text=s) for i, s in enumerate(sort_corpus(unique))]


def ingest(path: Path) -> List[CorpusString]:
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    corpus = parse_corpus(data)
    if not corpus:
        raise EmptyDatasetError()
    logger.info("ingest | path={} strings={}", path, len(corpus))
    return corpus


def read_queries(path: Path) -> List[str]:
    """Query file for multi-query and bench runs: same line rules, input order kept."""
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    out: List[str] = []
    for lineno, raw in enumerate(data.split(b"\n"), start=1):
        raw = raw[:-1] if raw.endswith(b"\r") else raw
        if not raw:
            continue
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IngestError("invalid UTF-8", line=lineno) from exc
        if text not in out:
            out.append(text)
    return out
