from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

from autoss.core.config import logger
from autoss.core.errors import (
    DigestMismatchError,
    DuplicateStringError,
    EmptyDatasetError,
    IndexBuildError,
    IndexFormatError,
)
from autoss.domain.metrics import phi_key
from autoss.domain.model import CorpusString, StringRange
from autoss.index.digest import kids_digest, node_digest_from_parts, string_hash
from autoss.index.signing import SignatureProvider


@dataclass(eq=False)
class MBNode:
    """
    MB-tree node (N_b, N_e, h_N). Leaves hold corpus entries, internal nodes hold
    children; kids_digest is h^{1->f} over whichever of the two is present.
    """
    range: StringRange
    digest: bytes
    kids_digest: bytes
    entries: List[CorpusString] = field(default_factory=list)
    children: List["MBNode"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def size(self) -> int:
        return len(self.entries) if self.is_leaf else len(self.children)


@dataclass(eq=False)
class MBTree:
    root: MBNode
    fanout: int
    leaf_fanout: int
    corpus: List[CorpusString]
    root_signature: bytes = b""

    @property
    def root_digest(self) -> bytes:
        return self.root.digest

    def iter_nodes(self) -> Iterator[MBNode]:
        """Pre-order."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def iter_postorder(self) -> Iterator[MBNode]:
        def walk(node: MBNode) -> Iterator[MBNode]:
            for child in node.children:
                yield from walk(child)
            yield node

        return walk(self.root)

    def leaves(self) -> List[MBNode]:
        return [n for n in self.iter_nodes() if n.is_leaf]

    def leaf_of(self, text: str) -> Optional[MBNode]:
        node = self.root
        while not node.is_leaf:
            nxt = next((c for c in node.children if c.range.contains(text)), None)
            if nxt is None:
                return None
            node = nxt
        if any(e.text == text for e in node.entries):
            return node
        return None

    def path_to(self, text: str) -> List[MBNode]:
        """Root-to-leaf path of the leaf holding text (empty if text is not indexed)."""
        path = [self.root]
        node = self.root
        while not node.is_leaf:
            nxt = next((c for c in node.children if c.range.contains(text)), None)
            if nxt is None:
                return []
            path.append(nxt)
            node = nxt
        return path if any(e.text == text for e in node.entries) else []

    def strings_under(self, node: MBNode) -> List[str]:
        if node.is_leaf:
            return [e.text for e in node.entries]
        out: List[str] = []
        for child in node.children:
            out.extend(self.strings_under(child))
        return out

    def texts(self) -> List[str]:
        return [c.text for c in self.corpus]

    def verify_signature(self, provider: SignatureProvider, public_key: bytes) -> bool:
        return provider.verify(self.root.digest, self.root_signature, public_key)


# === Construction ===

def _leaf(entries: List[CorpusString]) -> MBNode:
    kids = kids_digest(string_hash(e.text) for e in entries)
    rng = StringRange(entries[0].text, entries[-1].text)
    return MBNode(
        range=rng,
        digest=node_digest_from_parts(rng.lo, rng.hi, kids),
        kids_digest=kids,
        entries=list(entries),
    )


def _internal(children: List[MBNode]) -> MBNode:
    kids = kids_digest(c.digest for c in children)
    rng = StringRange(children[0].range.lo, children[-1].range.hi)
    return MBNode(
        range=rng,
        digest=node_digest_from_parts(rng.lo, rng.hi, kids),
        kids_digest=kids,
        children=list(children),
    )


def node_digest(node: MBNode) -> bytes:
    """Recomputes h_N from the node's children (or leaf strings)."""
    if node.is_leaf:
        kids = kids_digest(string_hash(e.text) for e in node.entries)
    else:
        kids = kids_digest(c.digest for c in node.children)
    return node_digest_from_parts(node.range.lo, node.range.hi, kids)


def build_tree(
    corpus: Sequence[CorpusString],
    fanout: int,
    leaf_fanout: Optional[int] = None,
) -> MBTree:
    """
    Bottom-up bulk load: sort by φ, pack leaves left to right, then pack each
    parent level the same way until one node remains.
    """
    if fanout < 2:
        raise IndexBuildError(f"fanout must be >= 2, got {fanout}")
    leaf_cap = leaf_fanout or fanout
    if leaf_cap < 1:
        raise IndexBuildError(f"leaf_fanout must be >= 1, got {leaf_cap}")
    if not corpus:
        raise EmptyDatasetError()

    ordered = sorted(corpus, key=lambda c: phi_key(c.text))
    for prev, cur in zip(ordered, ordered[1:]):
        if prev.text == cur.text:
            raise DuplicateStringError(cur.text)

    level = [_leaf(ordered[i:i + leaf_cap]) for i in range(0, len(ordered), leaf_cap)]
    height = 1
    while len(level) > 1:
        level = [_internal(level[i:i + fanout]) for i in range(0, len(level), fanout)]
        height += 1

    tree = MBTree(root=level[0], fanout=fanout, leaf_fanout=leaf_cap, corpus=ordered)
    logger.info(
        "build_tree | n={} fanout={} leaf_fanout={} height={}",
        len(ordered),
        fanout,
        leaf_cap,
        height,
    )
    return tree


def sign_root(tree: MBTree, provider: SignatureProvider, private_key: bytes) -> bytes:
    signature = provider.sign(tree.root.digest, private_key)
    tree.root_signature = signature
    logger.info("sign_root | provider={} sig_len={}", provider.name, len(signature))
    return signature


# === Invariants ===

def check_tree(tree: MBTree) -> None:
    """
    Validates node invariants and Merkle consistency. Raises IndexFormatError /
    DigestMismatchError naming the post-order index of the offending node.
    """
    seen: Dict[str, int] = {}
    for idx, node in enumerate(tree.iter_postorder()):
        cap = tree.leaf_fanout if node.is_leaf else tree.fanout
        if not 1 <= node.size <= cap:
            raise IndexFormatError(f"entry count {node.size} outside [1, {cap}]", node=idx)
        if not node.range.is_valid():
            raise IndexFormatError("range lo > hi", node=idx)
        if node.is_leaf:
            texts = [e.text for e in node.entries]
            if any(a >= b for a, b in zip(texts, texts[1:])):
                raise IndexFormatError("leaf strings not strictly φ-sorted", node=idx)
            if node.range.lo != texts[0] or node.range.hi != texts[-1]:
                raise IndexFormatError("leaf range does not match its strings", node=idx)
            for t in texts:
                if t in seen:
                    raise IndexFormatError(f"string {t!r} covered twice", node=idx)
                seen[t] = idx
        else:
            kids = node.children
            if any(a.range.hi >= b.range.lo for a, b in zip(kids, kids[1:])):
                raise IndexFormatError("child ranges overlap or are unsorted", node=idx)
            if node.range.lo != kids[0].range.lo or node.range.hi != kids[-1].range.hi:
                raise IndexFormatError("internal range does not match children", node=idx)
        if node_digest(node) != node.digest:
            raise DigestMismatchError(node=idx)
    if len(seen) != len(tree.corpus) or any(c.text not in seen for c in tree.corpus):
        raise IndexFormatError("leaves do not cover the corpus exactly once")
