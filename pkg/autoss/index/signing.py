from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Tuple

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from autoss.core.config import logger
from autoss.core.errors import SignatureError

PRIVATE_KEY_FILE = "owner.key"
PUBLIC_KEY_FILE = "owner.pub"


class SignatureProvider(Protocol):
    """Signs 32-byte root digests. Keys are opaque byte strings."""

    name: str

    def generate_keypair(self) -> Tuple[bytes, bytes]:
        """Returns (private_key, public_key)."""
        ...

    def sign(self, digest: bytes, private_key: bytes) -> bytes:
        ...

    def verify(self, digest: bytes, signature: bytes, public_key: bytes) -> bool:
        ...

    def is_well_formed(self, signature: bytes) -> bool:
        ...


@dataclass(frozen=True)
class Ed25519Provider:
    """Deterministic Ed25519 over the root digest, raw 32-byte keys."""
    name: str = "ed25519"

    def generate_keypair(self) -> Tuple[bytes, bytes]:
        priv = Ed25519PrivateKey.generate()
        priv_raw = priv.private_bytes(
            encoding=serialization.Encoding.Raw,
            format=serialization.PrivateFormat.Raw,
            encryption_algorithm=serialization.NoEncryption(),
        )
        pub_raw = priv.public_key().public_bytes(
            encoding=serialization.Encoding.Raw,
            format=serialization.PublicFormat.Raw,
        )
        return priv_raw, pub_raw

    def sign(self, digest: bytes, private_key: bytes) -> bytes:
        try:
            priv = Ed25519PrivateKey.from_private_bytes(private_key)
        except ValueError as exc:
            raise SignatureError(f"invalid Ed25519 private key: {exc}") from exc
        return priv.sign(digest)

    def verify(self, digest: bytes, signature: bytes, public_key: bytes) -> bool:
        try:
            pub = Ed25519PublicKey.from_public_bytes(public_key)
        except ValueError:
            logger.warning("Ed25519Provider.verify | malformed public key | len={}", len(public_key))
            return False
        try:
            pub.verify(signature, digest)
        except InvalidSignature:
            return False
        return True

    def is_well_formed(self, signature: bytes) -> bool:
        return len(signature) == 64


@dataclass(frozen=True)
class DebugSigner:
    """
    Transparent signer for tests and debugging: the signature is a tagged copy of
    the digest and the keys are fixed markers. Offers no security.
    """
    name: str = "debug"
    tag: bytes = b"DBG1"

    def generate_keypair(self) -> Tuple[bytes, bytes]:
        return b"debug-private", b"debug-public"

    def sign(self, digest: bytes, private_key: bytes) -> bytes:
        return self.tag + digest

    def verify(self, digest: bytes, signature: bytes, public_key: bytes) -> bool:
        return signature == self.tag + digest

    def is_well_formed(self, signature: bytes) -> bool:
        return len(signature) == len(self.tag) + 32 and signature.startswith(self.tag)


def get_provider(name: str) -> SignatureProvider:
    if name == "ed25519":
        return Ed25519Provider()
    if name == "debug":
        return DebugSigner()
    raise SignatureError(f"unknown signature provider {name!r}")


# === Key files ===

def save_keypair(directory: Path, private_key: bytes, public_key: bytes) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / PRIVATE_KEY_FILE).write_bytes(private_key)
    (directory / PUBLIC_KEY_FILE).write_bytes(public_key)
    logger.info("Key pair written | dir={}", directory)


def load_or_create_keypair(directory: Path, provider: SignatureProvider) -> Tuple[bytes, bytes]:
    priv_path = directory / PRIVATE_KEY_FILE
    pub_path = directory / PUBLIC_KEY_FILE
    if priv_path.exists() and pub_path.exists():
        logger.debug("Loading existing key pair | dir={}", directory)
        return priv_path.read_bytes(), pub_path.read_bytes()
    priv, pub = provider.generate_keypair()
    save_keypair(directory, priv, pub)
    return priv, pub


def load_public_key(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise SignatureError(f"cannot read public key {path}: {exc}") from exc


def load_private_key(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise SignatureError(f"cannot read private key {path}: {exc}") from exc
