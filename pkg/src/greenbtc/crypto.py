"""Hashing and deterministic signing primitives shared by every layer.

The election and puzzle layers both assume the signature scheme is a pure
function of (key, message): signing the same bytes twice must return the
same signature, otherwise a miner could grind re-signatures for extra
lottery draws.  Ed25519 (RFC 8032) has that property; randomized schemes
such as ECDSA with fresh nonces must not be substituted here.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

DIGEST_BYTES = 32
SEED_BYTES = 32
PUBLIC_KEY_BYTES = 32
SIGNATURE_BYTES = 64


def sha256(data: bytes) -> bytes:
    """SHA-256 digest of ``data`` as 32 raw bytes."""
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class KeyPair:
    """Raw Ed25519 key material; both fields are opaque octet strings."""

    secret_key: bytes
    public_key: bytes


def keygen(seed: bytes) -> KeyPair:
    """Derive a key pair from a 32-byte seed, reproducibly.

    The same seed always yields the same pair, so simulation nodes and
    test fixtures can be reconstructed from a manifest seed alone.
    """
    if len(seed) != SEED_BYTES:
        raise ValueError(f"seed must be {SEED_BYTES} bytes, got {len(seed)}")
    secret = Ed25519PrivateKey.from_private_bytes(seed)
    return KeyPair(secret_key=seed, public_key=secret.public_key().public_bytes_raw())


def sign(secret_key: bytes, message: bytes) -> bytes:
    """Deterministic Ed25519 signature (64 bytes) over ``message``."""
    return Ed25519PrivateKey.from_private_bytes(secret_key).sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """True iff ``signature`` is valid for ``message`` under ``public_key``.

    Never raises: malformed keys, signatures, or types count as invalid.
    """
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False
