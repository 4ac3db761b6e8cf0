"""Unidirectional single-hop proxy re-encryption (AFGH-style, type-3 pairing).

Key material and ciphertexts::

    sk = a,  pk = (g1^a, g2^a)
    EK  (second level) = (pk1^r, m * Z^r)           re-encryptable
    rk_{A->B}          = pkB2^(1/a) = g2^(b/a)
    REK (first level)  = (e(c1, rk), c2) = (Z^(b r), m * Z^r)

The symmetric data key is never encrypted directly: a random GT element
``m`` is encapsulated and ``K = HKDF(m)`` (see :func:`encapsulate`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from . import group
from .group import (
    DEFAULT_PARAMS,
    G1_BYTES,
    G2_BYTES,
    GT_BYTES,
    GroupEncodingError,
    PreParams,
)
from .rng import default_rng

KDF_INFO = b"dedupvault/k/v1"
KEY_BYTES = 16
ID_BYTES = 16


class InvalidCiphertext(ValueError):
    """A PRE ciphertext or key failed group-membership validation."""


@dataclass(frozen=True)
class PrePublicKey:
    pk1: object  # G1
    pk2: object  # G2

    SIZE = G1_BYTES + G2_BYTES

    def to_bytes(self) -> bytes:
        return group.g1_to_bytes(self.pk1) + group.g2_to_bytes(self.pk2)

    @classmethod
    def from_bytes(cls, b: bytes) -> "PrePublicKey":
        if len(b) != cls.SIZE:
            raise GroupEncodingError("bad public key length")
        pk1 = group.g1_from_bytes(b[:G1_BYTES])
        pk2 = group.g2_from_bytes(b[G1_BYTES:])
        if pk1.is_zero() or pk2.is_zero():
            raise GroupEncodingError("identity public key")
        return cls(pk1, pk2)

    def is_consistent(self, params: PreParams = DEFAULT_PARAMS) -> bool:
        """Both halves carry the same exponent: e(pk1, g2) == e(g1, pk2)."""
        return group.pairing(self.pk1, params.g2) == group.pairing(params.g1, self.pk2)


@dataclass(frozen=True)
class PreKeyPair:
    user_id: bytes
    sk: object  # Fr
    pk: PrePublicKey = field(repr=False)

    def secret_bytes(self) -> bytes:
        return group.scalar_to_bytes(self.sk)

    @classmethod
    def from_secret(cls, user_id: bytes, sk_bytes: bytes, params: PreParams = DEFAULT_PARAMS):
        sk = group.scalar_from_bytes(sk_bytes)
        if sk.is_zero():
            raise ValueError("zero secret key")
        return cls(user_id, sk, PrePublicKey(params.g1 * sk, params.g2 * sk))


@dataclass(frozen=True)
class SecondLevelCiphertext:
    c1: object  # G1
    c2: object  # GT

    SIZE = G1_BYTES + GT_BYTES

    def to_bytes(self) -> bytes:
        return group.g1_to_bytes(self.c1) + group.gt_to_bytes(self.c2)

    @classmethod
    def from_bytes(cls, b: bytes) -> "SecondLevelCiphertext":
        if len(b) != cls.SIZE:
            raise GroupEncodingError("bad EK length")
        return cls(group.g1_from_bytes(b[:G1_BYTES]), group.gt_from_bytes(b[G1_BYTES:]))

    def validate(self) -> None:
        if self.c1.is_zero():
            raise InvalidCiphertext("c1 is the identity")
        if not group.gt_is_valid(self.c2):
            raise InvalidCiphertext("c2 is not in GT")


@dataclass(frozen=True)
class FirstLevelCiphertext:
    d1: object  # GT
    d2: object  # GT

    SIZE = 2 * GT_BYTES

    def to_bytes(self) -> bytes:
        return group.gt_to_bytes(self.d1) + group.gt_to_bytes(self.d2)

    @classmethod
    def from_bytes(cls, b: bytes) -> "FirstLevelCiphertext":
        if len(b) != cls.SIZE:
            raise GroupEncodingError("bad REK length")
        return cls(group.gt_from_bytes(b[:GT_BYTES]), group.gt_from_bytes(b[GT_BYTES:]))

    def validate(self) -> None:
        if self.d1 == group.gt_one():
            raise InvalidCiphertext("d1 is the identity")
        if not (group.gt_is_valid(self.d1) and group.gt_is_valid(self.d2)):
            raise InvalidCiphertext("component is not in GT")


@dataclass(frozen=True)
class ReEncryptionKey:
    rk: object  # G2
    delegator: bytes
    delegatee: bytes

    SIZE = 2 * ID_BYTES + G2_BYTES

    def to_bytes(self) -> bytes:
        return self.delegator + self.delegatee + group.g2_to_bytes(self.rk)

    @classmethod
    def from_bytes(cls, b: bytes) -> "ReEncryptionKey":
        if len(b) != cls.SIZE:
            raise GroupEncodingError("bad re-encryption key length")
        return cls(group.g2_from_bytes(b[32:]), bytes(b[:16]), bytes(b[16:32]))

    def is_well_formed(self, delegator_pk: PrePublicKey, delegatee_pk: PrePublicKey,
                       params: PreParams = DEFAULT_PARAMS) -> bool:
        return group.pairing(delegator_pk.pk1, self.rk) == group.pairing(params.g1, delegatee_pk.pk2)


def keygen1(user_id: bytes, params: PreParams = DEFAULT_PARAMS, *, rng=default_rng, sk=None) -> PreKeyPair:
    """Fresh PRE key pair. ``sk`` (an int) is a test hook."""
    s = group.random_scalar(rng) if sk is None else group.scalar(sk)
    if s.is_zero():
        raise ValueError("secret key must be non-zero")
    return PreKeyPair(user_id, s, PrePublicKey(params.g1 * s, params.g2 * s))


def derive_key(m) -> bytes:
    """K = HKDF-SHA256(canonical(m)), 16 bytes."""
    hkdf = HKDF(algorithm=hashes.SHA256(), length=KEY_BYTES, salt=None, info=KDF_INFO)
    return hkdf.derive(group.gt_to_bytes(m))


def encapsulate(params: PreParams = DEFAULT_PARAMS, *, rng=default_rng, s=None):
    """Random session element m = Z^s and its data key K."""
    e = group.random_scalar(rng) if s is None else group.scalar(s)
    m = params.z ** e
    return derive_key(m), m


def en(pk: PrePublicKey, m, params: PreParams = DEFAULT_PARAMS, *, rng=default_rng, r=None):
    if not group.gt_is_valid(m):
        raise InvalidCiphertext("message is not in GT")
    e = group.random_scalar(rng) if r is None else group.scalar(r)
    if e.is_zero():
        raise ValueError("r must be non-zero")
    return SecondLevelCiphertext(pk.pk1 * e, m * params.z ** e)


def de2(sk, ek: SecondLevelCiphertext, params: PreParams = DEFAULT_PARAMS):
    ek.validate()
    t = group.pairing(ek.c1, params.g2) ** (~sk)
    return ek.c2 / t


def rg(sk_delegator, pk_delegatee: PrePublicKey, *, delegator: bytes = bytes(16),
       delegatee: bytes = bytes(16)) -> ReEncryptionKey:
    if sk_delegator.is_zero():
        raise ValueError("zero delegator key")
    return ReEncryptionKey(pk_delegatee.pk2 * (~sk_delegator), delegator, delegatee)


def re_en(rk: ReEncryptionKey, ek: SecondLevelCiphertext) -> FirstLevelCiphertext:
    if not isinstance(ek, SecondLevelCiphertext):
        raise TypeError("only second-level ciphertexts can be re-encrypted")
    ek.validate()
    if rk.rk.is_zero():
        raise InvalidCiphertext("identity re-encryption key")
    return FirstLevelCiphertext(group.pairing(ek.c1, rk.rk), ek.c2)


def de1(sk, rek: FirstLevelCiphertext):
    rek.validate()
    return rek.d2 / (rek.d1 ** (~sk))
