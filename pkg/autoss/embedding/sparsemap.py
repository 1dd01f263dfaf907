from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Tuple

import numpy as np
from Levenshtein import distance as _lev_distance

from autoss.core.config import app_config, logger
from autoss.core.errors import EmbeddingError
from autoss.core.wire import ByteReader, lp_str, u32, u64

EMBEDDING_MAGIC = b"EMB1"


@dataclass(frozen=True)
class EmbeddingFunction:
    """
    Contractive string embedding f: D -> R^d. Coordinate i of a string is its
    minimum edit distance to the reference set S_i; distances between points use
    the 1/sqrt(d)-scaled L2 norm (see `euclid`), which never exceeds edit distance.
    """
    dim: int
    reference_sets: Tuple[Tuple[str, ...], ...]
    seed: int

    def embed(self, s: str) -> np.ndarray:
        return np.array(
            [min(_lev_distance(s, r) for r in refs) for refs in self.reference_sets],
            dtype=np.float64,
        )

    def embed_many(self, strings: Iterable[str]) -> np.ndarray:
        rows = [self.embed(s) for s in strings]
        if not rows:
            return np.zeros((0, self.dim), dtype=np.float64)
        return np.vstack(rows)


def reference_set_sizes(dim: int, cap: int, n: int) -> list[int]:
    return [min(2 ** i, cap, n) for i in range(1, dim + 1)]


def build_embedding(
    corpus: Sequence[str],
    dim: int,
    seed: int,
    cap: int | None = None,
) -> EmbeddingFunction:
    """
    Samples S_1..S_d from the corpus without replacement with a seeded numpy
    Generator. |S_i| = min(2^i, cap, n).
    """
    if dim < 1:
        raise EmbeddingError(f"embedding dimension must be >= 1, got {dim}")
    if not corpus:
        raise EmbeddingError("cannot build an embedding over an empty corpus")
    if not 0 <= seed < 2 ** 64:
        raise EmbeddingError(f"seed must fit in u64, got {seed}")
    cap = cap if cap is not None else app_config.embedding.reference_cap
    if cap < 1:
        raise EmbeddingError(f"reference cap must be >= 1, got {cap}")

    rng = np.random.default_rng(seed)
    texts = list(corpus)
    sets = []
    for size in reference_set_sizes(dim, cap, len(texts)):
        picked = rng.choice(len(texts), size=size, replace=False)
        sets.append(tuple(sorted(texts[int(i)] for i in picked)))

    logger.info(
        "build_embedding | n={} dim={} seed={} ref_sizes={}",
        len(texts),
        dim,
        seed,
        [len(s) for s in sets],
    )
    return EmbeddingFunction(dim=dim, reference_sets=tuple(sets), seed=seed)


def embed(f: EmbeddingFunction, s: str) -> np.ndarray:
    return f.embed(s)


def euclid(p: np.ndarray, q: np.ndarray) -> float:
    """sqrt(sum((p_i - q_i)^2) / d). Dividing inside the root keeps integer inputs exact."""
    if p.shape != q.shape:
        raise EmbeddingError(f"dimension mismatch {p.shape} vs {q.shape}")
    diff = p - q
    return float(np.sqrt(np.dot(diff, diff) / p.shape[0]))


# === EMB1 file ===

def encode_embedding(f: EmbeddingFunction) -> bytes:
    out = [EMBEDDING_MAGIC, u32(f.dim), u64(f.seed)]
    for refs in f.reference_sets:
        out.append(u32(len(refs)))
        out.extend(lp_str(r) for r in refs)
    return b"".join(out)


def decode_embedding(data: bytes) -> EmbeddingFunction:
    reader = ByteReader(data, lambda msg, off: EmbeddingError(f"{msg} at byte {off}"))
    if reader.raw(len(EMBEDDING_MAGIC)) != EMBEDDING_MAGIC:
        raise EmbeddingError("bad magic, not an EMB1 embedding file")
    dim = reader.u32()
    seed = reader.u64()
    if dim < 1:
        raise EmbeddingError("embedding dimension must be >= 1")
    sets = []
    for _ in range(dim):
        size = reader.u32()
        if size == 0:
            raise EmbeddingError("empty reference set")
        sets.append(tuple(reader.lp_str() for _ in range(size)))
    reader.expect_end()
    return EmbeddingFunction(dim=dim, reference_sets=tuple(sets), seed=seed)


def save_embedding(f: EmbeddingFunction, path: Path) -> int:
    data = encode_embedding(f)
    path.write_bytes(data)
    logger.info("save_embedding | path={} dim={} bytes={}", path, f.dim, len(data))
    return len(data)


def load_embedding(path: Path) -> EmbeddingFunction:
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise EmbeddingError(f"cannot read embedding {path}: {exc}") from exc
    return decode_embedding(data)
