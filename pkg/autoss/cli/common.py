from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel

from autoss.core.config import settings
from autoss.domain.model import Mode
from autoss.embedding.sparsemap import EmbeddingFunction, load_embedding
from autoss.index.signing import SignatureProvider, get_provider


def emit(model: BaseModel) -> None:
    sys.stdout.write(model.model_dump_json(indent=2) + "\n")


def floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def ints(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def modes(text: str) -> List[Mode]:
    try:
        return [Mode(m.strip()) for m in text.split(",") if m.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected modes from vs2,evs2, got {text!r}") from exc


def add_signer(p: argparse.ArgumentParser) -> None:
    p.add_argument("--signer", choices=["ed25519", "debug"], default="ed25519")


def add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=settings.seed, help="defaults to AUTOSS_SEED (0)")


def provider_of(args: argparse.Namespace) -> SignatureProvider:
    return get_provider(args.signer)


def embedding_of(path: Optional[Path]) -> Optional[EmbeddingFunction]:
    return load_embedding(path) if path is not None else None
