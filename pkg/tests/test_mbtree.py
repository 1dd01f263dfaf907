import numpy as np
import pytest

from autoss.core.errors import DuplicateStringError, EmptyDatasetError, IndexBuildError
from autoss.domain.model import CorpusString
from autoss.index.mbtree import MBNode, build_tree, check_tree, node_digest, sign_root
from tests.conftest import EXAMPLE_STRINGS
from tests.helpers import as_corpus, h_kids, h_node, h_str, random_strings


def oracle_digest(node: MBNode) -> bytes:
    if node.is_leaf:
        kids = h_kids([h_str(e.text) for e in node.entries])
    else:
        kids = h_kids([oracle_digest(c) for c in node.children])
    return h_node(node.range.lo, node.range.hi, kids)


def test_binary_tree_with_three_string_leaves():
    tree = build_tree(as_corpus(EXAMPLE_STRINGS), fanout=3)
    leaves = tree.leaves()
    assert len(leaves) == 4
    assert [len(leaf.entries) for leaf in leaves] == [3, 3, 3, 3]
    assert len(tree.root.children) == 2
    assert [len(c.children) for c in tree.root.children] == [3, 1]
    assert tree.root.range.lo == "kate" and tree.root.range.hi == "zoe"


def test_single_string_is_a_root_leaf():
    tree = build_tree([CorpusString(0, "smith")], fanout=8)
    assert tree.root.is_leaf
    assert tree.root.range.lo == tree.root.range.hi == "smith"


def test_separate_leaf_capacity():
    tree = build_tree(as_corpus(EXAMPLE_STRINGS), fanout=2, leaf_fanout=3)
    assert [[e.text for e in leaf.entries] for leaf in tree.leaves()][2] == ["lucas", "lucy", "luke"]
    assert len(tree.root.children) == 2


def test_every_digest_matches_the_oracle():
    words = random_strings(np.random.default_rng(11), 100)
    tree = build_tree(as_corpus(words), fanout=10)
    for node in tree.iter_nodes():
        assert node.digest == oracle_digest(node)
        assert node_digest(node) == node.digest
    check_tree(tree)


def test_equal_inputs_give_equal_roots():
    words = random_strings(np.random.default_rng(12), 50)
    assert build_tree(as_corpus(words), 4).root_digest == build_tree(as_corpus(words), 4).root_digest


def test_input_order_does_not_matter():
    words = random_strings(np.random.default_rng(13), 50)
    shuffled = [CorpusString(i, s) for i, s in enumerate(reversed(words))]
    assert build_tree(shuffled, 4).root_digest == build_tree(as_corpus(words), 4).root_digest


def test_empty_and_duplicate_corpora_are_rejected():
    with pytest.raises(EmptyDatasetError):
        build_tree([], 4)
    with pytest.raises(DuplicateStringError):
        build_tree([CorpusString(0, "smith"), CorpusString(1, "smith")], 4)
    with pytest.raises(IndexBuildError, match="fanout must be >= 2"):
        build_tree(as_corpus(["a", "b"]), 1)
    with pytest.raises(IndexBuildError, match="leaf_fanout"):
        build_tree(as_corpus(["a", "b"]), 2, leaf_fanout=-1)


def test_leaf_of_and_path_to(example_tree):
    leaf = example_tree.leaf_of("lucy")
    assert leaf is not None and [e.text for e in leaf.entries] == ["lucas", "lucy", "luke"]
    assert example_tree.leaf_of("lucille") is None
    path = example_tree.path_to("kato")
    assert path[0] is example_tree.root and path[-1].is_leaf
    assert example_tree.path_to("nobody") == []
    assert example_tree.strings_under(example_tree.root) == EXAMPLE_STRINGS


def test_signature_round_trip(ed25519_keys):
    provider, priv, pub = ed25519_keys
    words = random_strings(np.random.default_rng(14), 60)
    tree = build_tree(as_corpus(words), 4)
    sign_root(tree, provider, priv)
    assert tree.verify_signature(provider, pub)

    rebuilt = build_tree(as_corpus(words), 4)
    assert provider.verify(rebuilt.root_digest, tree.root_signature, pub)


def test_any_replaced_string_breaks_the_signature(ed25519_keys):
    provider, priv, pub = ed25519_keys
    rng = np.random.default_rng(15)
    words = random_strings(rng, 60)
    tree = build_tree(as_corpus(words), 4)
    sign_root(tree, provider, priv)
    for _ in range(100):
        i = int(rng.integers(0, len(words)))
        changed = list(words)
        changed[i] = changed[i] + "x"
        if len(set(changed)) != len(changed):
            continue
        forged = build_tree(as_corpus(changed), 4)
        assert not provider.verify(forged.root_digest, tree.root_signature, pub)
