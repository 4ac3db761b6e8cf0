"""Data user client: one flow at a time, driven by messages and retry timers."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

from .. import messages as m
from .. import possession, pre, symcrypto
from ..errors import (
    AlreadyHolder,
    AuthFailure,
    ConsistencyFailure,
    DuplicateDetected,
    ErrorCode,
    FileTooSmall,
    FlowTimeout,
    NotDuplicate,
    error_for,
)
from ..rng import default_rng
from .common import ProtocolConfig, error
from .runtime import PRI, PUB, Actor, du_address

log = logging.getLogger(__name__)
_flow_ids = itertools.count(1)


@dataclass
class Flow:
    kind: str
    state: str = "start"
    file_id: bytes = m.ZERO_ID
    data: bytes = b""
    h: bytes = b""
    expect: str | None = None
    pending: dict = field(default_factory=dict)
    challenged: bool = False
    attempts: int = 0
    id: int = field(default_factory=lambda: next(_flow_ids))
    done: bool = False
    result: object = None
    error: Exception | None = None


@dataclass
class DeferredCheck:
    rek: pre.FirstLevelCiphertext
    ct: bytes
    h: bytes


class DataUser(Actor):
    def __init__(self, u_id: bytes | None = None, *, config: ProtocolConfig = ProtocolConfig(),
                 rng=default_rng, sig_keys=None, pre_keys=None) -> None:
        self.rng = rng
        self.u_id = u_id or rng.bytes(16)
        self.address = du_address(self.u_id)
        self.config = config
        self.sig_keys = sig_keys or symcrypto.SigKeyPair.generate(rng)
        self.pre_keys = pre_keys or pre.keygen1(self.u_id, rng=rng)
        self.catalog: dict[bytes, bytes] = {}
        self.flow: Flow | None = None
        self.online = True
        self.rekey_willing = True
        self.defer_consistency_check = False
        self.deferred: dict[bytes, DeferredCheck] = {}

    def __repr__(self) -> str:
        return f"DataUser({self.u_id.hex()[:8]})"

    # -- flow plumbing

    def _begin(self, flow: Flow) -> Flow:
        if self.flow is not None and not self.flow.done:
            raise RuntimeError("a flow is already running")
        self.flow = flow
        return flow

    def _arm(self, delay: float | None = None) -> None:
        f = self.flow
        self.ctx.set_timer(self.config.du_retry if delay is None else delay, ("flow", f.id, f.attempts))

    def _finish(self, result=None) -> None:
        self.flow.done, self.flow.result = True, result

    def _fail(self, exc: Exception) -> None:
        self.flow.done, self.flow.error = True, exc

    def _signed(self, cls, **values):
        return m.signed(cls, self.sig_keys, **values)

    def _key(self, rek) -> bytes:
        return pre.derive_key(pre.de1(self.pre_keys.sk, rek))

    def on_timer(self, token):
        f = self.flow
        if token[0] != "flow" or f is None or f.done or token[1] != f.id or token[2] != f.attempts:
            return
        f.attempts += 1
        if f.attempts >= self.config.du_max_attempts:
            self._fail(FlowTimeout(f"{f.kind} gave up in state {f.state}"))
            return
        self._resend()
        self._arm()

    def _resend(self) -> None:
        f = self.flow
        if f.kind == "enroll":
            for dst in (PUB, PRI):
                if dst not in f.pending:
                    self.ctx.send(dst, self._enroll_msg())
        elif f.kind == "upload":
            if f.state in ("checking", "proving"):
                self.ctx.send(PUB, self._upload_check())
            elif f.state == "registering":
                self.ctx.send(PRI, f.pending["dp2"])
            elif f.state == "storing":
                self.ctx.send(PUB, f.pending["dp1"])
            elif f.state == "fetching":
                self.ctx.send(PUB, self._download_req(f.file_id))
        elif f.kind == "download":
            self.ctx.send(PUB, self._download_req(f.file_id))
        elif f.kind == "revoke":
            self.ctx.send(PUB, f.pending["req"])

    def _retry_soon(self) -> None:
        f = self.flow
        f.attempts += 1
        if f.attempts >= self.config.du_max_attempts:
            self._fail(FlowTimeout(f"{f.kind} kept getting busy"))
            return
        self._arm(self.config.busy_backoff)

    # -- flow starters (call inside a handler context)

    def _enroll_msg(self):
        return self._signed(m.Enroll, u_id=self.u_id, sig_pk=self.sig_keys.public, pre_pk=self.pre_keys.pk)

    def start_enroll(self) -> Flow:
        f = self._begin(Flow("enroll", "waiting"))
        self._resend()
        self._arm()
        return f

    def _upload_check(self):
        return self._signed(m.UploadCheck, u_id=self.u_id, h=self.flow.h, sig_pk=self.sig_keys.public)

    def start_upload(self, data: bytes, expect: str | None = None) -> Flow:
        f = self._begin(Flow("upload", "checking", data=data, h=symcrypto.hash(data), expect=expect))
        if len(data) < possession.MIN_FILE_BYTES:
            self._fail(FileTooSmall(f"files must be at least {possession.MIN_FILE_BYTES} bytes"))
            return f
        self._resend()
        self._arm()
        return f

    def _download_req(self, fid):
        return self._signed(m.DownloadReq, file_id=fid, u_id=self.u_id)

    def start_download(self, file_id: bytes) -> Flow:
        f = self._begin(Flow("download", "waiting", file_id=file_id))
        self._resend()
        self._arm()
        return f

    def start_revoke(self, file_id: bytes, successor_kind=m.Successor.NONE, successor: bytes = m.ZERO_ID) -> Flow:
        f = self._begin(Flow("revoke", "waiting", file_id=file_id))
        f.pending["req"] = self._signed(m.RevokeReq, file_id=file_id, u_id=self.u_id,
                                        successor_kind=int(successor_kind), successor=successor)
        self._resend()
        self._arm()
        return f

    # -- message handling

    def on_message(self, src, msg):
        if not self.online:
            return
        handler = getattr(self, "_on_" + type(msg).__name__, None)
        if handler is not None:
            handler(src, msg)

    def _active(self, kind: str) -> Flow | None:
        f = self.flow
        if f is None or f.done or f.kind != kind:
            return None
        return f

    def _on_Ack(self, src, msg):
        if msg.tag == m.Enroll.TAG:
            f = self._active("enroll")
            if f is not None:
                f.pending[src] = True
                if PUB in f.pending and PRI in f.pending:
                    self._finish(self.u_id)
        elif msg.tag == m.RegisterPossession.TAG:
            f = self._active("upload")
            if f is not None and f.state == "registering" and msg.file_id == f.file_id:
                f.state = "storing"
                self.ctx.send(PUB, f.pending["dp1"])
                self._arm()
        elif msg.tag == m.StoreData.TAG:
            f = self._active("upload")
            if f is not None and f.state == "storing" and msg.file_id == f.file_id:
                self.catalog[f.file_id] = f.h
                self._finish({"file_id": f.file_id, "deduplicated": False})
        elif msg.tag == m.RevokeReq.TAG:
            f = self._active("revoke")
            if f is not None and msg.file_id == f.file_id:
                self.catalog.pop(f.file_id, None)
                self._finish({"file_id": f.file_id, "revoked": True})

    def _on_UploadCheckResp(self, src, msg):
        f = self._active("upload")
        if f is None or f.state != "checking":
            return
        if msg.status == m.UploadStatus.DUPLICATE:
            if f.expect == "new":
                self._fail(DuplicateDetected(msg.file_id.hex()))
                return
            f.state, f.file_id = "proving", msg.file_id
            return
        if f.expect == "dup":
            self._fail(NotDuplicate("no stored copy of this file"))
            return
        if msg.rek is None:
            return
        try:
            key = self._key(msg.rek)
        except ValueError:
            self._fail(error_for(ErrorCode.BAD_REQUEST, "malformed key material"))
            return
        f.file_id = msg.file_id
        ct = symcrypto.encrypt(key, f.data, rng=self.rng)
        regions = possession.generate_index_set(self.rng, self.config.n_regions)
        digests = possession.compute_hash_code_set(f.data, regions)
        f.pending["dp2"] = self._signed(m.RegisterPossession, file_id=f.file_id, u_id=self.u_id,
                                        regions=regions, digests=digests)
        f.pending["dp1"] = self._signed(m.StoreData, file_id=f.file_id, u_id=self.u_id, rek=msg.rek, ct=ct)
        f.state = "registering"
        self.ctx.send(PRI, f.pending["dp2"])
        self._arm()

    def _on_DedupChallenge(self, src, msg):
        f = self._active("upload")
        if src != PRI or f is None or f.state not in ("checking", "proving") or f.expect == "new":
            return
        if f.state == "proving" and msg.file_id != f.file_id:
            return
        f.state, f.file_id, f.challenged = "proving", msg.file_id, True
        ch = possession.Challenge(msg.file_id, msg.nonce, msg.regions)
        resp = possession.respond(f.data, ch)
        self.ctx.send(PRI, self._signed(m.DedupResponse, file_id=msg.file_id, u_id=self.u_id,
                                        nonce=resp.nonce, digests=resp.digests))

    def _on_DedupGrant(self, src, msg):
        f = self._active("upload")
        if f is None or f.state != "proving" or msg.file_id != f.file_id:
            return
        if self.defer_consistency_check:
            self.deferred[f.file_id] = DeferredCheck(msg.rek, msg.ct, f.h)
            self.catalog[f.file_id] = f.h
            self._finish({"file_id": f.file_id, "deduplicated": True})
            return
        try:
            self._check_consistency(msg.rek, msg.ct, f.h)
        except ConsistencyFailure as exc:
            self.ctx.send(PUB, self._signed(m.ConsistencyReport, file_id=f.file_id, u_id=self.u_id))
            self._fail(exc)
            return
        self.catalog[f.file_id] = f.h
        self._finish({"file_id": f.file_id, "deduplicated": True})

    def _check_consistency(self, rek, ct, h) -> bytes:
        try:
            data = symcrypto.decrypt(self._key(rek), ct)
        except (AuthFailure, ValueError) as exc:
            raise ConsistencyFailure("stored ciphertext does not open under the issued key") from exc
        if symcrypto.hash(data) != h:
            raise ConsistencyFailure("stored ciphertext does not match H(F)")
        return data

    def check_deferred(self, file_id: bytes) -> bytes:
        """Run a consistency check that was postponed at dedup time."""
        d = self.deferred.pop(file_id)
        return self._check_consistency(d.rek, d.ct, d.h)

    def _on_DownloadResp(self, src, msg):
        f = self.flow
        if f is None or f.done or msg.file_id != f.file_id:
            return
        if not (f.kind == "download" or (f.kind == "upload" and f.state == "fetching")):
            return
        expected = self.catalog.get(msg.file_id, msg.h) if f.kind == "download" else f.h
        try:
            if msg.h != expected:
                raise ConsistencyFailure("server tag differs from the one recorded at upload")
            data = self._check_consistency(msg.rek, msg.ct, msg.h)
        except ConsistencyFailure as exc:
            self.ctx.send(PUB, self._signed(m.ConsistencyReport, file_id=msg.file_id, u_id=self.u_id))
            self._fail(exc)
            return
        if f.kind == "download":
            self._finish(data)
        else:
            self.catalog[f.file_id] = f.h
            self._finish({"file_id": f.file_id, "deduplicated": True})

    def _on_Error(self, src, msg):
        code = msg.code
        if code == ErrorCode.NONCE_MISMATCH:
            return
        f = self.flow
        if f is None or f.done:
            return
        if f.file_id != m.ZERO_ID and msg.file_id not in (m.ZERO_ID, f.file_id):
            return
        if code == ErrorCode.BUSY:
            if f.kind == "upload" and f.state == "proving":
                f.state = "checking"
            self._retry_soon()
            return
        if f.kind == "upload":
            if code == ErrorCode.ALREADY_HOLDER and f.challenged:
                # Admitted, but the grant got lost: fetch and verify instead.
                f.state = "fetching"
                self.ctx.send(PUB, self._download_req(f.file_id))
                self._arm()
                return
            if code == ErrorCode.ALREADY_HOLDER:
                self._fail(AlreadyHolder(msg.file_id.hex()))
                return
            if code == ErrorCode.SESSION_EXPIRED and f.state in ("registering", "storing"):
                f.state, f.file_id = "checking", m.ZERO_ID
                self._retry_soon()
                return
        self._fail(error_for(code))

    # -- owner duties during revocation

    def _on_OwnerQuery(self, src, msg):
        if src != PUB:
            return
        if self.rekey_willing:
            self.ctx.send(PUB, m.Ack(m.OwnerQuery.TAG, msg.file_id, self.u_id, msg.round))
        else:
            self.ctx.send(PUB, error(ErrorCode.DECLINED, msg.file_id, msg.round))

    def _on_OwnerRekeyOffer(self, src, msg):
        if src != PUB or not self.rekey_willing:
            return
        try:
            data = symcrypto.decrypt(self._key(msg.rek_old), msg.ct)
            new_key = self._key(msg.rek_new)
        except (AuthFailure, ValueError):
            return
        known = self.catalog.get(msg.file_id)
        if known is not None and symcrypto.hash(data) != known:
            return
        ct = symcrypto.encrypt(new_key, data, rng=self.rng)
        self.ctx.send(PUB, self._signed(m.OwnerReupload, file_id=msg.file_id, u_id=self.u_id,
                                        round=msg.round, ct=ct))


def raise_for(flow: Flow):
    if flow.error is not None:
        raise flow.error
    if not flow.done:
        raise FlowTimeout(f"{flow.kind} did not finish")
    return flow.result


__all__ = ["DataUser", "DeferredCheck", "Flow", "raise_for"]
