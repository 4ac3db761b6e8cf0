"""Independent reimplementations used to check the package's outputs.

Nothing here imports the package's codec or KDF; each helper is written
from the underlying standard (RFC 5869, the frame layout) with stdlib only.
"""

import hashlib
import hmac
import struct


def hkdf_sha256(ikm: bytes, info: bytes, length: int, salt: bytes = b"") -> bytes:
    """RFC 5869 extract-then-expand."""
    prk = hmac.new(salt or bytes(32), ikm, hashlib.sha256).digest()
    out, block, i = b"", b"", 1
    while len(out) < length:
        block = hmac.new(prk, block + info + bytes([i]), hashlib.sha256).digest()
        out += block
        i += 1
    return out[:length]


def frame(tag: int, body: bytes, version: int = 1) -> bytes:
    return struct.pack(">IBB", len(body) + 2, version, tag) + body


def error_body(code: int, file_id: bytes, ref: bytes) -> bytes:
    return struct.pack(">H16s8s", code, file_id, ref)


def upload_check_body(u_id: bytes, h: bytes, sig_pk: bytes, sig: bytes) -> bytes:
    return struct.pack(">16s32s32s64s", u_id, h, sig_pk, sig)


def commit_body(kind: int, file_id: bytes, u_id: bytes, ref: bytes, decision: int) -> bytes:
    return struct.pack(">B16s16s8sB", kind, file_id, u_id, ref, decision)


def dedup_challenge_body(file_id: bytes, nonce: bytes, regions) -> bytes:
    out = struct.pack(">16s16sH", file_id, nonce, len(regions))
    for a, b in regions:
        out += struct.pack(">HH", a, b)
    return out


def store_data_body(file_id: bytes, u_id: bytes, rek: bytes, ct: bytes, sig: bytes) -> bytes:
    return struct.pack(">16s16s", file_id, u_id) + rek + struct.pack(">I", len(ct)) + ct + sig
