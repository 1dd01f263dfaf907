from __future__ import annotations

from typing import List, Tuple

import numpy as np
import pytest

from autoss.domain.model import CorpusString
from autoss.embedding.sparsemap import EmbeddingFunction, build_embedding
from autoss.index.mbtree import MBTree, build_tree, sign_root
from autoss.index.signing import DebugSigner, Ed25519Provider
from tests.helpers import as_corpus, random_strings

# Four leaves of three under a binary tree. With q="kate"
# and theta=1 the third leaf is the only non-candidate node.
EXAMPLE_STRINGS = [
    "kate", "katherine", "katie",
    "katjana", "kato", "katrina",
    "lucas", "lucy", "luke",
    "mary", "nina", "zoe",
]


@pytest.fixture
def debug_signer() -> DebugSigner:
    return DebugSigner()


@pytest.fixture(scope="session")
def ed25519_keys() -> Tuple[Ed25519Provider, bytes, bytes]:
    provider = Ed25519Provider()
    priv, pub = provider.generate_keypair()
    return provider, priv, pub


@pytest.fixture(scope="session")
def small_strings() -> List[str]:
    return random_strings(np.random.default_rng(7), 300, min_len=3, max_len=8, alphabet="abcde")


@pytest.fixture(scope="session")
def small_corpus(small_strings) -> List[CorpusString]:
    return as_corpus(small_strings)


@pytest.fixture(scope="session")
def small_tree(small_corpus) -> MBTree:
    tree = build_tree(small_corpus, fanout=4)
    sign_root(tree, DebugSigner(), b"debug-private")
    return tree


@pytest.fixture(scope="session")
def small_embedding(small_strings) -> EmbeddingFunction:
    return build_embedding(small_strings, dim=5, seed=0)


@pytest.fixture
def example_tree(debug_signer) -> MBTree:
    tree = build_tree(as_corpus(EXAMPLE_STRINGS), fanout=2, leaf_fanout=3)
    sign_root(tree, debug_signer, b"debug-private")
    return tree


@pytest.fixture
def db_path(tmp_path) -> str:
    return str(tmp_path / "results.db")
