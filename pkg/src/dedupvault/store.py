"""Ownership lists: P1 at Pub-CSP and P2 at Pri-CSP.

On-disk layout, one directory per file id::

    <root>/<fid-hex>/record.bin      canonical binary record (commit point)
    <root>/<fid-hex>/ct-<gen>.bin    ciphertext blob (Pub-CSP only)

Every mutation writes a temp file and renames it over ``record.bin``.  A
blob is written before the record that references it, so an interrupted
write leaves either the old record (plus an orphan blob that is swept on
open) or the new one.
"""

from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, replace
from pathlib import Path

from . import pre
from .errors import AlreadyHolder, DuplicateFileId, NotAHolder, SuccessorNotHolder, UnknownFile
from .possession import RegionIndex
from .wire import MalformedFrame, Reader, Writer

log = logging.getLogger(__name__)

RECORD = "record.bin"
_PUB_MAGIC = b"P1\x01"
_PRIV_MAGIC = b"P2\x01"


class SimulatedCrash(Exception):
    """Raised by a crash hook to abort a write between its steps."""


@dataclass(frozen=True)
class FileRecordPub:
    """P1 = {F_id, CT, H(F), (u_id, REK_u)...}; ``owners[0]`` is the current owner."""

    file_id: bytes
    blob_gen: int
    h: bytes
    owners: tuple  # ((u_id, FirstLevelCiphertext), ...)
    managed_by_u0: bool = False

    @property
    def holder_ids(self) -> list[bytes]:
        return [u for u, _ in self.owners]

    def rek_for(self, u_id: bytes):
        for u, rek in self.owners:
            if u == u_id:
                return rek
        return None

    def encode(self) -> bytes:
        w = Writer().fixed(_PUB_MAGIC, 3).fixed(self.file_id, 16).u32(self.blob_gen)
        w.fixed(self.h, 32).u8(int(self.managed_by_u0)).u16(len(self.owners))
        for u, rek in self.owners:
            w.fixed(u, 16).fixed(rek.to_bytes(), pre.FirstLevelCiphertext.SIZE)
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "FileRecordPub":
        r = Reader(data)
        if r.fixed(3) != _PUB_MAGIC:
            raise MalformedFrame("not a P1 record")
        fid, gen, h, managed = r.fixed(16), r.u32(), r.fixed(32), r.u8()
        owners = tuple(
            (r.fixed(16), pre.FirstLevelCiphertext.from_bytes(r.fixed(pre.FirstLevelCiphertext.SIZE)))
            for _ in range(r.u16())
        )
        r.done()
        return cls(fid, gen, h, owners, bool(managed))


@dataclass(frozen=True)
class FileRecordPriv:
    """P2 = {F_id, X', HC'(F), EK, (u_id, rk_{u0->u})...}."""

    file_id: bytes
    regions: tuple
    digests: tuple
    ek: pre.SecondLevelCiphertext
    holders: tuple  # ((u_id, ReEncryptionKey), ...)

    @property
    def holder_ids(self) -> list[bytes]:
        return [u for u, _ in self.holders]

    def encode(self) -> bytes:
        w = Writer().fixed(_PRIV_MAGIC, 3).fixed(self.file_id, 16).u16(len(self.regions))
        for reg in self.regions:
            w.u16(reg.start_bp).u16(reg.end_bp)
        w.u16(len(self.digests))
        for d in self.digests:
            w.fixed(d, 32)
        w.fixed(self.ek.to_bytes(), pre.SecondLevelCiphertext.SIZE).u16(len(self.holders))
        for u, rk in self.holders:
            w.fixed(u, 16).fixed(rk.to_bytes(), pre.ReEncryptionKey.SIZE)
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "FileRecordPriv":
        r = Reader(data)
        if r.fixed(3) != _PRIV_MAGIC:
            raise MalformedFrame("not a P2 record")
        fid = r.fixed(16)
        regions = tuple(RegionIndex(r.u16(), r.u16()) for _ in range(r.u16()))
        digests = tuple(r.fixed(32) for _ in range(r.u16()))
        ek = pre.SecondLevelCiphertext.from_bytes(r.fixed(pre.SecondLevelCiphertext.SIZE))
        holders = tuple(
            (r.fixed(16), pre.ReEncryptionKey.from_bytes(r.fixed(pre.ReEncryptionKey.SIZE)))
            for _ in range(r.u16())
        )
        r.done()
        return cls(fid, regions, digests, ek, holders)


class _RecordDir:
    """Directory-per-record persistence with atomic commits."""

    record_type: type

    def __init__(self, root, *, crash_hook=None, fsync: bool = False) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.crash_hook = crash_hook
        self.fsync = fsync
        self._records: dict[bytes, object] = {}
        self._locks: dict[bytes, threading.Lock] = {}
        self._guard = threading.Lock()
        self._load()

    # -- persistence helpers

    def _dir(self, file_id: bytes) -> Path:
        return self.root / file_id.hex()

    def _hook(self, stage: str) -> None:
        if self.crash_hook is not None:
            self.crash_hook(stage)

    def _write_atomic(self, path: Path, data: bytes, stage: str) -> None:
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(data)
            if self.fsync:
                fh.flush()
                os.fsync(fh.fileno())
        self._hook(stage)
        os.replace(tmp, path)

    def lock(self, file_id: bytes) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(file_id, threading.Lock())

    def _load(self) -> None:
        for d in sorted(self.root.iterdir()):
            if not d.is_dir():
                continue
            for tmp in d.glob("*.tmp"):
                tmp.unlink()
            rec_path = d / RECORD
            if not rec_path.exists():
                log.info("removing incomplete record dir %s", d.name)
                _rmtree(d)
                continue
            rec = self.record_type.decode(rec_path.read_bytes())
            self._records[rec.file_id] = rec
            self._sweep(rec)

    def _sweep(self, rec) -> None:
        pass

    def _commit(self, rec) -> None:
        d = self._dir(rec.file_id)
        d.mkdir(exist_ok=True)
        self._write_atomic(d / RECORD, rec.encode(), "record-temp-written")
        self._records[rec.file_id] = rec

    def _remove(self, file_id: bytes) -> None:
        d = self._dir(file_id)
        # deleting record.bin first is the commit point of a removal
        self._hook("before-delete")
        rec_path = d / RECORD
        if rec_path.exists():
            rec_path.unlink()
        _rmtree(d)
        self._records.pop(file_id, None)

    # -- queries

    def get(self, file_id: bytes):
        return self._records.get(file_id)

    def require(self, file_id: bytes):
        rec = self._records.get(file_id)
        if rec is None:
            raise UnknownFile(file_id.hex())
        return rec

    def file_ids(self) -> list[bytes]:
        return list(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, file_id: bytes) -> bool:
        return file_id in self._records


def _rmtree(d: Path) -> None:
    if not d.exists():
        return
    for p in d.iterdir():
        p.unlink()
    d.rmdir()


class PubStore(_RecordDir):
    """P1 records, CT blobs and the H(F) -> F_id index."""

    record_type = FileRecordPub

    def _load(self) -> None:
        self.hash_index: dict[bytes, bytes] = {}
        super()._load()
        for rec in self._records.values():
            self.hash_index[rec.h] = rec.file_id

    def _blob(self, file_id: bytes, gen: int) -> Path:
        return self._dir(file_id) / f"ct-{gen}.bin"

    def _sweep(self, rec: FileRecordPub) -> None:
        keep = self._blob(rec.file_id, rec.blob_gen).name
        for p in self._dir(rec.file_id).glob("ct-*.bin"):
            if p.name != keep:
                p.unlink()

    def dup_check(self, h: bytes) -> bytes | None:
        return self.hash_index.get(h)

    def read_ct(self, file_id: bytes) -> bytes:
        rec = self.require(file_id)
        return self._blob(file_id, rec.blob_gen).read_bytes()

    def blob_count(self) -> int:
        return sum(1 for _ in self.root.glob("*/ct-*.bin"))

    def create_record_pub(self, file_id: bytes, ct: bytes, h: bytes, u_id: bytes, rek) -> FileRecordPub:
        with self.lock(file_id):
            if file_id in self._records:
                raise DuplicateFileId(file_id.hex())
            if h in self.hash_index:
                raise DuplicateFileId(f"H(F) already stored as {self.hash_index[h].hex()}")
            rec = FileRecordPub(file_id, 0, h, ((u_id, rek),))
            self.discard_incomplete(file_id)
            self._dir(file_id).mkdir()
            self._write_atomic(self._blob(file_id, 0), ct, "blob-written")
            try:
                self._commit(rec)
            except BaseException:
                self._records.pop(file_id, None)
                raise
            self.hash_index[h] = file_id
            return rec

    def add_holder_pub(self, file_id: bytes, u_id: bytes, rek) -> FileRecordPub:
        with self.lock(file_id):
            rec = self.require(file_id)
            if u_id in rec.holder_ids:
                raise AlreadyHolder(u_id.hex())
            new = replace(rec, owners=rec.owners + ((u_id, rek),))
            self._commit(new)
            return new

    def revoke_holder(self, file_id: bytes, u_id: bytes, *, successor: bytes | None = None,
                      to_pricsp: bool = False) -> list[bytes]:
        """Remove ``u_id``; the last holder's removal deletes record and blob.

        When the current owner leaves, ``successor`` is rotated to the head of
        the list, or ``to_pricsp`` marks the file as managed by Pri-CSP.  Both
        happen in the same commit as the removal.
        """
        with self.lock(file_id):
            rec = self.require(file_id)
            if u_id not in rec.holder_ids:
                raise NotAHolder(u_id.hex())
            owners = [e for e in rec.owners if e[0] != u_id]
            if not owners:
                self._remove(file_id)
                self.hash_index.pop(rec.h, None)
                return []
            managed = rec.managed_by_u0 or to_pricsp
            if successor is not None:
                head = [e for e in owners if e[0] == successor]
                if not head:
                    raise SuccessorNotHolder(successor.hex())
                owners = head + [e for e in owners if e[0] != successor]
                managed = False
            self._commit(replace(rec, owners=tuple(owners), managed_by_u0=managed))
            return [u for u, _ in owners]

    def discard_incomplete(self, file_id: bytes) -> None:
        """Remove leftovers of an interrupted create (directory without a record)."""
        if file_id not in self._records:
            _rmtree(self._dir(file_id))

    def replace_after_rekey_pub(self, file_id: bytes, ct: bytes, rek_list) -> FileRecordPub:
        """Swap in CT' and each remaining holder's REK' in one commit."""
        with self.lock(file_id):
            rec = self.require(file_id)
            new_reks = dict(rek_list)
            if set(new_reks) != set(rec.holder_ids):
                raise ValueError("rekey package does not cover exactly the current holders")
            gen = rec.blob_gen + 1
            self._write_atomic(self._blob(file_id, gen), ct, "blob-written")
            new = replace(rec, blob_gen=gen, owners=tuple((u, new_reks[u]) for u, _ in rec.owners))
            self._commit(new)
            old = self._blob(file_id, rec.blob_gen)
            if old.exists():
                old.unlink()
            return new

    def delete(self, file_id: bytes) -> None:
        with self.lock(file_id):
            rec = self.require(file_id)
            self._remove(file_id)
            self.hash_index.pop(rec.h, None)


class PrivStore(_RecordDir):
    """P2 records held by Pri-CSP."""

    record_type = FileRecordPriv

    def create_record_priv(self, file_id, regions, digests, ek, u_id, rk) -> FileRecordPriv:
        with self.lock(file_id):
            if file_id in self._records:
                raise DuplicateFileId(file_id.hex())
            rec = FileRecordPriv(file_id, tuple(regions), tuple(digests), ek, ((u_id, rk),))
            self._commit(rec)
            return rec

    def add_holder_priv(self, file_id: bytes, u_id: bytes, rk) -> FileRecordPriv:
        with self.lock(file_id):
            rec = self.require(file_id)
            if u_id in rec.holder_ids:
                raise AlreadyHolder(u_id.hex())
            new = replace(rec, holders=rec.holders + ((u_id, rk),))
            self._commit(new)
            return new

    def revoke_holder(self, file_id: bytes, u_id: bytes) -> list[bytes]:
        with self.lock(file_id):
            rec = self.require(file_id)
            if u_id not in rec.holder_ids:
                raise NotAHolder(u_id.hex())
            holders = tuple(e for e in rec.holders if e[0] != u_id)
            if not holders:
                self._remove(file_id)
                return []
            self._commit(replace(rec, holders=holders))
            return [u for u, _ in holders]

    def replace_after_rekey_priv(self, file_id: bytes, ek, retained_rk_list) -> FileRecordPriv:
        with self.lock(file_id):
            rec = self.require(file_id)
            new = replace(rec, ek=ek, holders=tuple(retained_rk_list))
            if not new.holders:
                self._remove(file_id)
                return new
            self._commit(new)
            return new

    def delete(self, file_id: bytes) -> None:
        with self.lock(file_id):
            self.require(file_id)
            self._remove(file_id)


@dataclass(frozen=True)
class UserEntry:
    u_id: bytes
    sig_pk: bytes
    pre_pk: pre.PrePublicKey


class UserDirectory:
    """Enrolled users ``u_id -> (PK_u, pk_u)``, persisted as one atomic file."""

    FILE = "users.bin"

    def __init__(self, root, *, crash_hook=None) -> None:
        self.path = Path(root) / self.FILE
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.crash_hook = crash_hook
        self._users: dict[bytes, UserEntry] = {}
        if self.path.exists():
            r = Reader(self.path.read_bytes())
            for _ in range(r.u32()):
                e = UserEntry(r.fixed(16), r.fixed(32), pre.PrePublicKey.from_bytes(r.fixed(pre.PrePublicKey.SIZE)))
                self._users[e.u_id] = e
            r.done()

    def get(self, u_id: bytes) -> UserEntry | None:
        return self._users.get(u_id)

    def __contains__(self, u_id: bytes) -> bool:
        return u_id in self._users

    def __len__(self) -> int:
        return len(self._users)

    def add(self, entry: UserEntry) -> None:
        users = dict(self._users)
        users[entry.u_id] = entry
        w = Writer().u32(len(users))
        for e in users.values():
            w.fixed(e.u_id, 16).fixed(e.sig_pk, 32).fixed(e.pre_pk.to_bytes(), pre.PrePublicKey.SIZE)
        tmp = self.path.with_name(self.FILE + ".tmp")
        tmp.write_bytes(w.getvalue())
        if self.crash_hook is not None:
            self.crash_hook("users-temp-written")
        os.replace(tmp, self.path)
        self._users = users
