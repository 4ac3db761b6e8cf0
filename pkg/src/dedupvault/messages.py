"""Protocol messages and the frame codec.

Frame layout::

    u32 length (covers version, tag and body) | u8 version = 1 | u8 tag | body

Every field of every message carries an accounting category.  The ``C_*``
categories are the communication-overhead components (ciphertext, hash,
hash-code set, user id, key); everything else (signatures, public keys,
echoed identifiers, control fields, length prefixes) is reported as
overhead.  :func:`breakdown` returns per-category byte counts that always
sum to :func:`measure`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace
from typing import ClassVar

from .errors import ErrorCode  # noqa: F401  (re-exported)
from .group import GroupEncodingError
from .possession import RegionIndex
from .pre import FirstLevelCiphertext, PrePublicKey
from .symcrypto import sign, verify
from .wire import MalformedFrame, Reader, UnknownTag, UnknownVersion, Writer

VERSION = 1
HEADER_BYTES = 6
MAX_FRAME = 128 * 1024 * 1024

CORE_CATEGORIES = ("C_C", "C_H", "C_HC", "C_ID", "C_K")


class UploadStatus(enum.IntEnum):
    DUPLICATE = 0
    NEW = 1


class RekeyMode(enum.IntEnum):
    DELEGATED = 0
    OWNER_ONLINE = 1
    PURGE = 2


class CommitKind(enum.IntEnum):
    CREATE = 0
    JOIN = 1
    REKEY = 2


class Successor(enum.IntEnum):
    NONE = 0
    USER = 1
    PRICSP = 2


class Role(enum.IntEnum):
    DU = 0
    PUBCSP = 1
    PRICSP = 2


# -- field kinds -------------------------------------------------------------


class _Kind:
    def encode(self, w: Writer, v) -> None:
        raise NotImplementedError

    def decode(self, r: Reader):
        raise NotImplementedError

    def account(self, v, category: str) -> dict:
        w = Writer()
        self.encode(w, v)
        return {category: len(w.getvalue())}


class _U8(_Kind):
    def encode(self, w, v):
        w.u8(int(v))

    def decode(self, r):
        return r.u8()


class _U16(_Kind):
    def encode(self, w, v):
        w.u16(int(v))

    def decode(self, r):
        return r.u16()


class _Fixed(_Kind):
    def __init__(self, n: int) -> None:
        self.n = n

    def encode(self, w, v):
        w.fixed(v, self.n)

    def decode(self, r):
        return r.fixed(self.n)


class _Var(_Kind):
    def encode(self, w, v):
        w.var(v)

    def decode(self, r):
        return r.var()

    def account(self, v, category):
        return {category: len(v), "framing": 4}


class _Rek(_Kind):
    def encode(self, w, v):
        w.fixed(v.to_bytes(), FirstLevelCiphertext.SIZE)

    def decode(self, r):
        return FirstLevelCiphertext.from_bytes(r.fixed(FirstLevelCiphertext.SIZE))


class _PubKey(_Kind):
    def encode(self, w, v):
        w.fixed(v.to_bytes(), PrePublicKey.SIZE)

    def decode(self, r):
        return PrePublicKey.from_bytes(r.fixed(PrePublicKey.SIZE))


class _Optional(_Kind):
    def __init__(self, inner: _Kind) -> None:
        self.inner = inner

    def encode(self, w, v):
        w.u8(0 if v is None else 1)
        if v is not None:
            self.inner.encode(w, v)

    def decode(self, r):
        flag = r.u8()
        if flag > 1:
            raise MalformedFrame("bad optional flag")
        return self.inner.decode(r) if flag else None

    def account(self, v, category):
        out = {"framing": 1}
        if v is not None:
            for k, n in self.inner.account(v, category).items():
                out[k] = out.get(k, 0) + n
        return out


class _List(_Kind):
    def __init__(self, item: _Kind, max_items: int = 0xFFFF) -> None:
        self.item = item
        self.max_items = max_items

    def encode(self, w, v):
        if len(v) > self.max_items:
            raise MalformedFrame("list too long")
        w.u16(len(v))
        for x in v:
            self.item.encode(w, x)

    def decode(self, r):
        n = r.u16()
        if n > self.max_items:
            raise MalformedFrame("list too long")
        return tuple(self.item.decode(r) for _ in range(n))

    def account(self, v, category):
        out = {"framing": 2}
        for x in v:
            for k, n in self.item.account(x, category).items():
                out[k] = out.get(k, 0) + n
        return out


class _Region(_Kind):
    def encode(self, w, v):
        w.u16(v.start_bp).u16(v.end_bp)

    def decode(self, r):
        a, b = r.u16(), r.u16()
        try:
            return RegionIndex(a, b)
        except ValueError as exc:
            raise MalformedFrame(str(exc)) from exc


class _RekEntry(_Kind):
    """(u_id, REK) pair: the id routes, the REK is key material."""

    def encode(self, w, v):
        w.fixed(v[0], 16)
        _Rek().encode(w, v[1])

    def decode(self, r):
        return (r.fixed(16), _Rek().decode(r))

    def account(self, v, category):
        return {"route": 16, category: FirstLevelCiphertext.SIZE}


U8, U16 = _U8(), _U16()
ID = _Fixed(16)
REF = _Fixed(8)
NONCE = _Fixed(16)
DIGEST = _Fixed(32)
SIG = _Fixed(64)
SIGPK = _Fixed(32)
VAR = _Var()
REK = _Rek()
PUBKEY = _PubKey()
REGIONS = _List(_Region(), 1024)
DIGESTS = _List(DIGEST, 1024)
REKLIST = _List(_RekEntry())


# -- messages ----------------------------------------------------------------

_REGISTRY: dict[int, type] = {}


class Message:
    TAG: ClassVar[int]
    LAYOUT: ClassVar[tuple]  # (field name, kind, category)
    SIGNED: ClassVar[bool] = False

    def body(self, *, include_sig: bool = True) -> bytes:
        w = Writer()
        for name, kind, _ in self.LAYOUT:
            if name == "sig" and not include_sig:
                continue
            kind.encode(w, getattr(self, name))
        return w.getvalue()

    def signing_bytes(self) -> bytes:
        return bytes([VERSION, self.TAG]) + self.body(include_sig=False)

    def encode(self) -> bytes:
        return encode(self)


def message(tag: int, *layout, signed: bool = False):
    def wrap(cls):
        cls = dataclass(frozen=True)(cls)
        names = [f.name for f in fields(cls)]
        if names != [name for name, _, _ in layout]:
            raise TypeError(f"{cls.__name__}: layout does not match fields")
        if tag in _REGISTRY:
            raise TypeError(f"duplicate tag {tag}")
        cls.TAG = tag
        cls.LAYOUT = layout
        cls.SIGNED = signed
        _REGISTRY[tag] = cls
        return cls

    return wrap


@message(1, ("role", U8, "ctl"), ("u_id", ID, "route"))
class Hello(Message):
    role: int
    u_id: bytes


@message(2, ("u_id", ID, "C_ID"), ("sig_pk", SIGPK, "key"), ("pre_pk", PUBKEY, "key"),
         ("sig", SIG, "sig"), signed=True)
class Enroll(Message):
    u_id: bytes
    sig_pk: bytes
    pre_pk: PrePublicKey
    sig: bytes


@message(3, ("u_id", ID, "C_ID"), ("h", DIGEST, "C_H"), ("sig_pk", SIGPK, "key"),
         ("sig", SIG, "sig"), signed=True)
class UploadCheck(Message):
    """dp = {H(F), sign(H(F))} plus the sender's identity."""

    u_id: bytes
    h: bytes
    sig_pk: bytes
    sig: bytes


@message(4, ("status", U8, "ctl"), ("file_id", ID, "route"), ("rek", _Optional(REK), "C_K"))
class UploadCheckResp(Message):
    status: int
    file_id: bytes
    rek: FirstLevelCiphertext | None


@message(5, ("file_id", ID, "route"), ("u_id", ID, "route"), ("rek", REK, "echo"),
         ("ct", VAR, "C_C"), ("sig", SIG, "sig"), signed=True)
class StoreData(Message):
    """dp1 = {u_id, REK, CT}."""

    file_id: bytes
    u_id: bytes
    rek: FirstLevelCiphertext
    ct: bytes
    sig: bytes


@message(6, ("file_id", ID, "route"), ("u_id", ID, "route"), ("regions", REGIONS, "C_HC"),
         ("digests", DIGESTS, "C_HC"), ("sig", SIG, "sig"), signed=True)
class RegisterPossession(Message):
    """dp2 = {F_id, u_id, X, HC(F)}."""

    file_id: bytes
    u_id: bytes
    regions: tuple
    digests: tuple
    sig: bytes


@message(7, ("file_id", ID, "route"), ("u_id", ID, "route"), ("ref", REF, "ctl"),
         ("pk", PUBKEY, "key"))
class KeyProvisionReq(Message):
    """``ref`` is all-zero for an initial upload, else it names a dedup session."""

    file_id: bytes
    u_id: bytes
    ref: bytes
    pk: PrePublicKey


@message(8, ("file_id", ID, "route"), ("u_id", ID, "route"), ("ref", REF, "ctl"),
         ("rek", REK, "C_K"))
class KeyProvisionResp(Message):
    file_id: bytes
    u_id: bytes
    ref: bytes
    rek: FirstLevelCiphertext


@message(9, ("file_id", ID, "route"), ("nonce", NONCE, "ctl"), ("regions", REGIONS, "ctl"))
class DedupChallenge(Message):
    file_id: bytes
    nonce: bytes
    regions: tuple


@message(10, ("file_id", ID, "route"), ("u_id", ID, "route"), ("nonce", NONCE, "ctl"),
         ("digests", DIGESTS, "proof"), ("sig", SIG, "sig"), signed=True)
class DedupResponse(Message):
    file_id: bytes
    u_id: bytes
    nonce: bytes
    digests: tuple
    sig: bytes


@message(11, ("file_id", ID, "route"), ("rek", REK, "C_K"), ("ct", VAR, "C_C"))
class DedupGrant(Message):
    file_id: bytes
    rek: FirstLevelCiphertext
    ct: bytes


@message(12, ("file_id", ID, "route"), ("u_id", ID, "route"), ("sig", SIG, "sig"), signed=True)
class DownloadReq(Message):
    file_id: bytes
    u_id: bytes
    sig: bytes


@message(13, ("file_id", ID, "route"), ("ct", VAR, "C_C"), ("rek", REK, "C_K"),
         ("h", DIGEST, "C_H"))
class DownloadResp(Message):
    file_id: bytes
    ct: bytes
    rek: FirstLevelCiphertext
    h: bytes


@message(14, ("file_id", ID, "route"), ("u_id", ID, "route"), ("successor_kind", U8, "ctl"),
         ("successor", ID, "ctl"), ("sig", SIG, "sig"), signed=True)
class RevokeReq(Message):
    file_id: bytes
    u_id: bytes
    successor_kind: int
    successor: bytes
    sig: bytes


@message(15, ("file_id", ID, "route"), ("round", REF, "ctl"))
class OwnerQuery(Message):
    file_id: bytes
    round: bytes


@message(16, ("file_id", ID, "route"), ("u_revoked", ID, "route"), ("mode", U8, "ctl"),
         ("round", REF, "ctl"), ("ct", VAR, "C_C"))
class RekeyRequest(Message):
    file_id: bytes
    u_revoked: bytes
    mode: int
    round: bytes
    ct: bytes


@message(17, ("file_id", ID, "route"), ("round", REF, "ctl"), ("ct", VAR, "C_C"),
         ("reks", REKLIST, "C_K"))
class RekeyPackage(Message):
    """{F_id, CT', [(u, REK_u')]}; CT' is empty when the owner re-encrypts."""

    file_id: bytes
    round: bytes
    ct: bytes
    reks: tuple


@message(18, ("file_id", ID, "route"), ("round", REF, "ctl"), ("ct", VAR, "C_C"),
         ("rek_old", REK, "C_K"), ("rek_new", REK, "C_K"))
class OwnerRekeyOffer(Message):
    file_id: bytes
    round: bytes
    ct: bytes
    rek_old: FirstLevelCiphertext
    rek_new: FirstLevelCiphertext


@message(19, ("file_id", ID, "route"), ("u_id", ID, "route"), ("round", REF, "ctl"),
         ("ct", VAR, "C_C"), ("sig", SIG, "sig"), signed=True)
class OwnerReupload(Message):
    file_id: bytes
    u_id: bytes
    round: bytes
    ct: bytes
    sig: bytes


@message(20, ("kind", U8, "ctl"), ("file_id", ID, "route"), ("u_id", ID, "route"),
         ("ref", REF, "ctl"), ("decision", U8, "ctl"))
class Commit(Message):
    kind: int
    file_id: bytes
    u_id: bytes
    ref: bytes
    decision: int


@message(21, ("tag", U8, "ctl"), ("file_id", ID, "route"), ("u_id", ID, "route"),
         ("ref", REF, "ctl"))
class Ack(Message):
    tag: int
    file_id: bytes
    u_id: bytes
    ref: bytes


@message(22, ("file_id", ID, "route"), ("u_id", ID, "route"), ("sig", SIG, "sig"), signed=True)
class ConsistencyReport(Message):
    file_id: bytes
    u_id: bytes
    sig: bytes


@message(23, ("code", U16, "ctl"), ("file_id", ID, "route"), ("ref", REF, "ctl"))
class Error(Message):
    code: int
    file_id: bytes
    ref: bytes


def signed(cls, key, **values):
    """Build a signed message: the signature covers version, tag and the body without it."""
    unsigned = cls(**values, sig=bytes(64))
    return replace(unsigned, sig=sign(key, unsigned.signing_bytes()))


def check_signature(msg: Message, public: bytes) -> bool:
    return verify(public, msg.signing_bytes(), msg.sig)


ProtocolMessage = Message
MESSAGE_TYPES = dict(_REGISTRY)
ZERO_ID = bytes(16)
ZERO_REF = bytes(8)


# -- codec ---------------------------------------------------------------------


def encode(msg: Message) -> bytes:
    body = msg.body()
    n = 2 + len(body)
    if n > MAX_FRAME:
        raise MalformedFrame("frame exceeds 128 MiB")
    return n.to_bytes(4, "big") + bytes([VERSION, msg.TAG]) + body


def decode_body(tag: int, body: bytes) -> Message:
    cls = _REGISTRY.get(tag)
    if cls is None:
        raise UnknownTag(f"unknown message tag {tag}")
    r = Reader(body)
    values = {}
    try:
        for name, kind, _ in cls.LAYOUT:
            values[name] = kind.decode(r)
    except (GroupEncodingError, ValueError, TypeError) as exc:
        if isinstance(exc, MalformedFrame):
            raise
        raise MalformedFrame(f"{cls.__name__}.{name}: {exc}") from exc
    r.done()
    return cls(**values)


def decode(frame: bytes) -> Message:
    """Decode one complete frame. Raises only :class:`CodecError` subclasses."""
    if len(frame) < HEADER_BYTES:
        raise MalformedFrame("frame shorter than header")
    n = int.from_bytes(frame[:4], "big")
    if n > MAX_FRAME:
        raise MalformedFrame("frame exceeds 128 MiB")
    if n < 2 or len(frame) != 4 + n:
        raise MalformedFrame("length field does not match frame size")
    if frame[4] != VERSION:
        raise UnknownVersion(f"protocol version {frame[4]}")
    return decode_body(frame[5], bytes(frame[6:]))


def frame_length(header: bytes) -> int:
    """Bytes still to read after a 4-byte length prefix."""
    n = int.from_bytes(header[:4], "big")
    if n > MAX_FRAME or n < 2:
        raise MalformedFrame("bad frame length")
    return n


def measure(msg: Message) -> int:
    return len(encode(msg))


def breakdown(msg: Message) -> dict[str, int]:
    out = {"framing": HEADER_BYTES}
    for name, kind, category in msg.LAYOUT:
        for k, n in kind.account(getattr(msg, name), category).items():
            out[k] = out.get(k, 0) + n
    return out


def core_size(msg: Message) -> int:
    b = breakdown(msg)
    return sum(b.get(c, 0) for c in CORE_CATEGORIES)

