from __future__ import annotations

from pathlib import Path
from typing import List

from autoss.core.config import logger
from autoss.core.errors import IndexFormatError
from autoss.core.wire import ByteReader, lp_bytes, lp_str, u8, u32
from autoss.domain.model import CorpusString, StringRange
from autoss.index.digest import DIGEST_SIZE, kids_digest, string_hash
from autoss.index.mbtree import MBNode, MBTree, check_tree

INDEX_MAGIC = b"MBT1"

_KIND_LEAF = 0
_KIND_INTERNAL = 1


def encode_tree(tree: MBTree) -> bytes:
    """
    MBT1 layout: magic, fanout, leaf_fanout, corpus (count + strings), nodes in
    post-order (kind, lo, hi, digest, child count, child offsets), root signature.
    Leaf offsets index the corpus; internal offsets index earlier nodes.
    """
    position = {c.text: i for i, c in enumerate(tree.corpus)}
    out = [INDEX_MAGIC, u32(tree.fanout), u32(tree.leaf_fanout), u32(len(tree.corpus))]
    out.extend(lp_str(c.text) for c in tree.corpus)

    nodes = list(tree.iter_postorder())
    node_index = {id(n): i for i, n in enumerate(nodes)}
    out.append(u32(len(nodes)))
    for node in nodes:
        out.append(u8(_KIND_LEAF if node.is_leaf else _KIND_INTERNAL))
        out.append(lp_str(node.range.lo))
        out.append(lp_str(node.range.hi))
        out.append(node.digest)
        if node.is_leaf:
            offsets = [position[e.text] for e in node.entries]
        else:
            offsets = [node_index[id(c)] for c in node.children]
        out.append(u32(len(offsets)))
        out.extend(u32(o) for o in offsets)
    out.append(lp_bytes(tree.root_signature))
    return b"".join(out)


def decode_tree(data: bytes) -> MBTree:
    """Parses an MBT1 image and re-validates every node. Never returns a partial tree."""
    reader = ByteReader(data, lambda msg, off: IndexFormatError(f"{msg} at byte {off}"))
    if reader.raw(len(INDEX_MAGIC)) != INDEX_MAGIC:
        raise IndexFormatError("bad magic, not an MBT1 index file")
    fanout = reader.u32()
    leaf_fanout = reader.u32()
    if fanout < 2 or leaf_fanout < 1:
        raise IndexFormatError(f"invalid fanout {fanout}/{leaf_fanout}")

    count = reader.u32()
    corpus = [CorpusString(id=i, text=reader.lp_str()) for i in range(count)]
    if count == 0:
        raise IndexFormatError("empty corpus")
    if any(a.text >= b.text for a, b in zip(corpus, corpus[1:])):
        raise IndexFormatError("corpus strings not strictly φ-sorted")

    node_count = reader.u32()
    nodes: List[MBNode] = []
    has_parent: List[bool] = []
    for idx in range(node_count):
        kind = reader.u8()
        lo = reader.lp_str()
        hi = reader.lp_str()
        digest = reader.raw(DIGEST_SIZE)
        n_kids = reader.u32()
        offsets = [reader.u32() for _ in range(n_kids)]
        if n_kids == 0:
            raise IndexFormatError("node without entries", node=idx)

        if kind == _KIND_LEAF:
            if any(o >= count for o in offsets):
                raise IndexFormatError("leaf offset outside corpus", node=idx)
            node = MBNode(StringRange(lo, hi), digest, b"", entries=[corpus[o] for o in offsets])
        elif kind == _KIND_INTERNAL:
            if any(o >= idx or has_parent[o] for o in offsets):
                raise IndexFormatError("child offset invalid or reused", node=idx)
            for o in offsets:
                has_parent[o] = True
            node = MBNode(StringRange(lo, hi), digest, b"", children=[nodes[o] for o in offsets])
        else:
            raise IndexFormatError(f"unknown node kind {kind}", node=idx)
        nodes.append(node)
        has_parent.append(False)

    signature = reader.lp_bytes()
    reader.expect_end()

    if not nodes:
        raise IndexFormatError("index has no nodes")
    orphans = [i for i, p in enumerate(has_parent) if not p]
    if orphans != [len(nodes) - 1]:
        raise IndexFormatError("nodes do not form a single tree rooted at the last node")

    tree = MBTree(
        root=nodes[-1],
        fanout=fanout,
        leaf_fanout=leaf_fanout,
        corpus=corpus,
        root_signature=signature,
    )
    _restore_kids_digests(tree)
    check_tree(tree)
    return tree


def _restore_kids_digests(tree: MBTree) -> None:
    for node in tree.iter_postorder():
        if node.is_leaf:
            node.kids_digest = kids_digest(string_hash(e.text) for e in node.entries)
        else:
            node.kids_digest = kids_digest(c.digest for c in node.children)


def save_tree(tree: MBTree, path: Path) -> int:
    data = encode_tree(tree)
    path.write_bytes(data)
    logger.info("save_tree | path={} bytes={} n={}", path, len(data), len(tree.corpus))
    return len(data)


def load_tree(path: Path) -> MBTree:
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IndexFormatError(f"cannot read index {path}: {exc}") from exc
    try:
        tree = decode_tree(data)
    except IndexFormatError as exc:
        logger.error("load_tree | path={} error={}", path, exc)
        raise
    logger.info("load_tree | path={} n={} fanout={}", path, len(tree.corpus), tree.fanout)
    return tree
