from __future__ import annotations

import argparse
from pathlib import Path
from typing import Optional

from pydantic import BaseModel

from autoss.cli.common import add_seed, add_signer, emit, provider_of
from autoss.core.config import app_config, logger
from autoss.embedding.sparsemap import build_embedding, save_embedding
from autoss.harness.ingest import ingest
from autoss.index.mbtree import build_tree, sign_root
from autoss.index.signing import load_or_create_keypair
from autoss.index.storage import save_tree


# ========= Models =========

class BuildResponse(BaseModel):
    strings: int
    fanout: int
    leaf_fanout: int
    root_digest: str
    index_path: str
    index_bytes: int
    keys_dir: str


class EmbedResponse(BaseModel):
    strings: int
    dim: int
    seed: int
    reference_sizes: list[int]
    embed_path: str
    embed_bytes: int


# ========= Commands =========

def cmd_build(args: argparse.Namespace) -> int:
    corpus = ingest(args.data)
    leaf_fanout: Optional[int] = args.leaf_fanout or app_config.tree.leaf_fanout
    tree = build_tree(corpus, args.fanout, leaf_fanout)
    provider = provider_of(args)
    private_key, _ = load_or_create_keypair(args.keys, provider)
    sign_root(tree, provider, private_key)
    written = save_tree(tree, args.out)
    emit(
        BuildResponse(
            strings=len(corpus),
            fanout=tree.fanout,
            leaf_fanout=tree.leaf_fanout,
            root_digest=tree.root_digest.hex(),
            index_path=str(args.out),
            index_bytes=written,
            keys_dir=str(args.keys),
        )
    )
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    corpus = ingest(args.data)
    f = build_embedding([c.text for c in corpus], args.dim, args.seed, args.cap)
    written = save_embedding(f, args.out)
    logger.info("embed | out={} dim={} seed={}", args.out, args.dim, args.seed)
    emit(
        EmbedResponse(
            strings=len(corpus),
            dim=f.dim,
            seed=f.seed,
            reference_sizes=[len(s) for s in f.reference_sets],
            embed_path=str(args.out),
            embed_bytes=written,
        )
    )
    return 0


def register(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("build", help="owner: build and sign an MB-tree index")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--fanout", type=int, default=app_config.tree.fanout)
    p.add_argument("--leaf-fanout", type=int, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--keys", type=Path, required=True, help="directory holding owner.key / owner.pub")
    add_signer(p)
    p.set_defaults(handler=cmd_build)

    p = sub.add_parser("embed", help="owner: build the contractive embedding")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--dim", type=int, default=app_config.embedding.dim)
    p.add_argument("--cap", type=int, default=app_config.embedding.reference_cap)
    p.add_argument("--out", type=Path, required=True)
    add_seed(p)
    p.set_defaults(handler=cmd_embed)
