"""BLS12-381 pairing group: parameters, scalars and canonical encodings.

Arithmetic is delegated to mcl (via ``pymcl``).  Encodings are our own so
that they are byte-exact and library independent:

* G1 / G2 points use the standard zcash compressed form (48 / 96 bytes,
  big-endian x with compression, infinity and sort flags in the top bits).
* GT elements are the 12 base-field coefficients of the Fp12 tower, each
  as 48 bytes big-endian, in mcl's tower order (576 bytes).
* Scalars are 32 bytes big-endian.
"""

from __future__ import annotations

from dataclasses import dataclass

import pymcl

from .rng import default_rng

P = 0x1A0111EA397FE69A4B1BA7B6434BACD764774B84F38512BF6730D2A0F6B0F6241EABFFFEB153FFFFB9FEFFFFFFFFAAAB
Q = int(pymcl.r)
HALF_P = (P - 1) // 2

G1_BYTES = 48
G2_BYTES = 96
GT_BYTES = 576
SCALAR_BYTES = 32

_FLAG_COMPRESSED = 0x80
_FLAG_INFINITY = 0x40
_FLAG_SORT = 0x20


class GroupEncodingError(ValueError):
    """Bytes do not encode a valid group element."""


G1 = pymcl.G1
G2 = pymcl.G2
GT = pymcl.GT
Fr = pymcl.Fr


def scalar(x: int) -> pymcl.Fr:
    return Fr(str(x % Q))


def scalar_int(s: pymcl.Fr) -> int:
    return int(str(s))


def random_scalar(rng=default_rng) -> pymcl.Fr:
    """Uniform element of Zq* (never zero)."""
    return scalar(rng.below(Q - 1) + 1)


def scalar_to_bytes(s: pymcl.Fr) -> bytes:
    return scalar_int(s).to_bytes(SCALAR_BYTES, "big")


def scalar_from_bytes(b: bytes) -> pymcl.Fr:
    if len(b) != SCALAR_BYTES:
        raise GroupEncodingError("scalar must be 32 bytes")
    v = int.from_bytes(b, "big")
    if v >= Q:
        raise GroupEncodingError("scalar out of range")
    return scalar(v)


def _coords(point) -> list[int]:
    parts = str(point).split()
    if parts[0] == "0":
        return []
    return [int(v) for v in parts[1:]]


def _in_subgroup(point, identity) -> bool:
    # q*P == 0  <=>  (q-1)*P == -P
    return point * scalar(Q - 1) == -point


def g1_to_bytes(point: pymcl.G1) -> bytes:
    c = _coords(point)
    if not c:
        return bytes([_FLAG_COMPRESSED | _FLAG_INFINITY]) + bytes(G1_BYTES - 1)
    x, y = c
    out = bytearray(x.to_bytes(G1_BYTES, "big"))
    out[0] |= _FLAG_COMPRESSED
    if y > HALF_P:
        out[0] |= _FLAG_SORT
    return bytes(out)


def _fp2_is_large(a: int, b: int) -> bool:
    # lexicographic ordering on (c1, c0)
    return b > HALF_P if b else a > HALF_P


def g2_to_bytes(point: pymcl.G2) -> bytes:
    c = _coords(point)
    if not c:
        return bytes([_FLAG_COMPRESSED | _FLAG_INFINITY]) + bytes(G2_BYTES - 1)
    xa, xb, ya, yb = c
    out = bytearray(xb.to_bytes(48, "big") + xa.to_bytes(48, "big"))
    out[0] |= _FLAG_COMPRESSED
    if _fp2_is_large(ya, yb):
        out[0] |= _FLAG_SORT
    return bytes(out)


def _split_flags(b: bytes, size: int) -> tuple[bool, bool, bytes]:
    if len(b) != size:
        raise GroupEncodingError(f"expected {size} bytes, got {len(b)}")
    flags = b[0] & 0xE0
    if not flags & _FLAG_COMPRESSED:
        raise GroupEncodingError("uncompressed encodings are not accepted")
    infinity = bool(flags & _FLAG_INFINITY)
    sort = bool(flags & _FLAG_SORT)
    body = bytes([b[0] & 0x1F]) + b[1:]
    if infinity:
        if sort or any(body):
            raise GroupEncodingError("non-canonical point at infinity")
    return infinity, sort, body


def _fp(b: bytes) -> int:
    v = int.from_bytes(b, "big")
    if v >= P:
        raise GroupEncodingError("field element out of range")
    return v


def g1_from_bytes(b: bytes) -> pymcl.G1:
    infinity, sort, body = _split_flags(bytes(b), G1_BYTES)
    if infinity:
        return G1()
    x = _fp(body)
    try:
        pt = G1.deserialize(x.to_bytes(G1_BYTES, "little"))
    except Exception as exc:
        raise GroupEncodingError("not a point on G1") from exc
    if (_coords(pt)[1] > HALF_P) != sort:
        pt = -pt
    if not _in_subgroup(pt, G1()):
        raise GroupEncodingError("point not in the prime-order subgroup")
    return pt


def g2_from_bytes(b: bytes) -> pymcl.G2:
    infinity, sort, body = _split_flags(bytes(b), G2_BYTES)
    if infinity:
        return G2()
    xb, xa = _fp(body[:48]), _fp(body[48:])
    try:
        pt = G2.deserialize(xa.to_bytes(48, "little") + xb.to_bytes(48, "little"))
    except Exception as exc:
        raise GroupEncodingError("not a point on G2") from exc
    _, _, ya, yb = _coords(pt)
    if _fp2_is_large(ya, yb) != sort:
        pt = -pt
    if not _in_subgroup(pt, G2()):
        raise GroupEncodingError("point not in the prime-order subgroup")
    return pt


def gt_to_bytes(z: pymcl.GT) -> bytes:
    return b"".join(int(c).to_bytes(48, "big") for c in str(z).split())


def gt_from_bytes(b: bytes) -> pymcl.GT:
    """Parse a GT encoding.

    Only the field encoding is validated here; subgroup membership is checked
    by :func:`gt_is_valid` at the point of cryptographic use.
    """
    b = bytes(b)
    if len(b) != GT_BYTES:
        raise GroupEncodingError(f"expected {GT_BYTES} bytes, got {len(b)}")
    coeffs = [_fp(b[i : i + 48]) for i in range(0, GT_BYTES, 48)]
    try:
        return GT(" ".join(str(c) for c in coeffs))
    except Exception as exc:
        raise GroupEncodingError("bad GT encoding") from exc


def gt_is_valid(z: pymcl.GT) -> bool:
    """True iff ``z`` lies in the order-q subgroup of Fp12*."""
    if z.is_zero():
        return False
    return (z ** scalar(Q - 1)) * z == GT()


def gt_one() -> pymcl.GT:
    return GT()


@dataclass(frozen=True)
class PreParams:
    """Global pairing parameters shared by every actor."""

    g1: pymcl.G1
    g2: pymcl.G2
    z: pymcl.GT
    q: int = Q
    security_bits: int = 128

    def check(self) -> None:
        if self.z == GT():
            raise ValueError("degenerate pairing generator")


def _default_params() -> PreParams:
    g1, g2 = pymcl.g1, pymcl.g2
    return PreParams(g1=g1, g2=g2, z=pymcl.pairing(g1, g2))


DEFAULT_PARAMS = _default_params()
pairing = pymcl.pairing
