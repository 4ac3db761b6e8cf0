"""Data encryption (AES-128-GCM), hashing (SHA-256) and Ed25519 signatures."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import AuthFailure
from .rng import default_rng

NONCE_BYTES = 12
TAG_BYTES = 16
OVERHEAD = NONCE_BYTES + TAG_BYTES
DIGEST_BYTES = 32
SIG_BYTES = 64
SIG_PK_BYTES = 32


def encrypt(key: bytes, data: bytes, *, rng=default_rng) -> bytes:
    """nonce || body || tag, associated data empty."""
    if len(key) != 16:
        raise ValueError("data keys are 128-bit")
    nonce = rng.bytes(NONCE_BYTES)
    return nonce + AESGCM(key).encrypt(nonce, data, None)


def decrypt(key: bytes, ct: bytes) -> bytes:
    if len(key) != 16:
        raise ValueError("data keys are 128-bit")
    if len(ct) < OVERHEAD:
        raise AuthFailure("ciphertext shorter than nonce and tag")
    try:
        return AESGCM(key).decrypt(ct[:NONCE_BYTES], ct[NONCE_BYTES:], None)
    except InvalidTag as exc:
        raise AuthFailure("authentication tag mismatch") from exc


def hash(data: bytes) -> bytes:  # noqa: A001 - mirrors H(*)
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class SigKeyPair:
    seed: bytes
    public: bytes

    @classmethod
    def generate(cls, rng=default_rng) -> "SigKeyPair":
        return cls.from_seed(rng.bytes(32))

    @classmethod
    def from_seed(cls, seed: bytes) -> "SigKeyPair":
        sk = Ed25519PrivateKey.from_private_bytes(seed)
        pub = sk.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        return cls(seed, pub)


def sign(key: SigKeyPair, msg: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(key.seed).sign(msg)


def verify(public: bytes, msg: bytes, sig: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(sig, msg)
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True
