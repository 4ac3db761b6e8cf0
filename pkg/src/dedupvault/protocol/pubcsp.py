"""Pub-CSP: stores one ciphertext per distinct file plus the P1 ownership list.

Pub-CSP is the coordinator for every change to the holder set.  It writes
P1 first and then drives Pri-CSP with a ``Commit`` that it repeats until
acknowledged (or, for joins, answers every time Pri-CSP repeats its key
provisioning response), so P1 and P2 agree once the network goes quiet.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .. import messages as m
from ..errors import ErrorCode
from ..rng import default_rng
from ..store import PubStore, UserDirectory, UserEntry
from ..symcrypto import OVERHEAD
from .common import ProtocolConfig, error
from .runtime import PRI, Actor, du_address

log = logging.getLogger(__name__)


@dataclass
class InitSession:
    u_id: bytes
    h: bytes
    client: str
    started: float
    rek: object = None

    @property
    def awaiting_data(self) -> bool:
        return self.rek is not None


@dataclass
class DedupSession:
    ref: bytes
    client: str
    started: float


@dataclass
class Revocation:
    u_id: bytes
    client: str
    round: bytes
    mode: int
    state: str  # querying | package | owner | committing
    owner: bytes = m.ZERO_ID
    package: m.RekeyPackage | None = field(default=None, repr=False)


class PubCsp(Actor):
    address = "pub"

    def __init__(self, store: PubStore, users: UserDirectory, *,
                 config: ProtocolConfig = ProtocolConfig(), rng=default_rng) -> None:
        self.store = store
        self.users = users
        self.config = config
        self.rng = rng
        self.init_sessions: dict[bytes, InitSession] = {}
        self.init_by_hash: dict[bytes, bytes] = {}
        self.dedup_sessions: dict[tuple, DedupSession] = {}
        self.join_decisions: dict[bytes, tuple] = {}
        self.pending_commits: dict[tuple, m.Commit] = {}
        self.revocations: dict[bytes, Revocation] = {}
        self.finished_revocations: set[tuple] = set()
        self.consistency_reports: list[tuple] = []

    # -- helpers

    def _authentic(self, src: str, msg) -> UserEntry | None:
        user = self.users.get(msg.u_id)
        if user is None or src != du_address(msg.u_id) or not m.check_signature(msg, user.sig_pk):
            self.ctx.send(src, error(ErrorCode.SIGNATURE_INVALID, getattr(msg, "file_id", m.ZERO_ID)))
            return None
        return user

    def _commit(self, msg: m.Commit) -> None:
        key = (msg.file_id, msg.ref)
        self.pending_commits[key] = msg
        self.ctx.send(PRI, msg)
        self.ctx.set_timer(self.config.retry_interval, ("commit", key))

    def _fresh(self, n: int) -> bytes:
        while True:
            b = self.rng.bytes(n)
            if any(b):
                return b

    # -- dispatch

    def on_message(self, src, msg):
        handler = getattr(self, "_on_" + type(msg).__name__, None)
        if handler is None:
            log.debug("pub: ignoring %s from %s", type(msg).__name__, src)
            return
        handler(src, msg)

    def on_timer(self, token):
        kind = token[0]
        if kind == "commit":
            msg = self.pending_commits.get(token[1])
            if msg is not None:
                self.ctx.send(PRI, msg)
                self.ctx.set_timer(self.config.retry_interval, token)
        elif kind == "kpreq":
            s = self.init_sessions.get(token[1])
            if s is not None and not s.awaiting_data:
                self._request_initial_key(token[1], s)
        elif kind == "kpreq-join":
            _, fid, u_id, ref = token
            s = self.dedup_sessions.get((fid, u_id))
            if s is not None and s.ref == ref:
                self._request_join_key(fid, u_id, ref)
        elif kind == "init-expiry":
            self._expire_init(token[1], token[2])
        elif kind == "dedup-expiry":
            _, fid, u_id, ref = token
            s = self.dedup_sessions.get((fid, u_id))
            if s is not None and s.ref == ref:
                del self.dedup_sessions[(fid, u_id)]
        elif kind == "rekey-retry":
            rv = self.revocations.get(token[1])
            if rv is not None and rv.round == token[2] and rv.state == "package":
                self._send_rekey_request(token[1], rv)
        elif kind == "owner-timeout":
            rv = self.revocations.get(token[1])
            if rv is not None and rv.round == token[2] and rv.state in ("querying", "owner"):
                log.info("owner did not complete rekey for %s; delegating", token[1].hex())
                self._start_delegated(token[1], rv)

    # -- enrollment

    def _on_Enroll(self, src, msg):
        if not m.check_signature(msg, msg.sig_pk) or not msg.pre_pk.is_consistent():
            self.ctx.send(src, error(ErrorCode.SIGNATURE_INVALID))
            return
        known = self.users.get(msg.u_id)
        if known is not None and (known.sig_pk, known.pre_pk) != (msg.sig_pk, msg.pre_pk):
            self.ctx.send(src, error(ErrorCode.ENROLLMENT_CONFLICT))
            return
        if known is None:
            self.users.add(UserEntry(msg.u_id, msg.sig_pk, msg.pre_pk))
        self.ctx.send(src, m.Ack(m.Enroll.TAG, m.ZERO_ID, msg.u_id, m.ZERO_REF))

    # -- upload: duplication check

    def _on_UploadCheck(self, src, msg):
        user = self._authentic(src, msg)
        if user is None:
            return
        if user.sig_pk != msg.sig_pk:
            self.ctx.send(src, error(ErrorCode.SIGNATURE_INVALID))
            return
        fid = self.store.dup_check(msg.h)
        if fid is not None:
            self._dedup_check(src, msg, fid)
            return
        pending = self.init_by_hash.get(msg.h)
        if pending is not None:
            s = self.init_sessions[pending]
            if s.u_id != msg.u_id:
                self.ctx.send(src, error(ErrorCode.BUSY, pending))
            elif s.awaiting_data:
                self.ctx.send(src, m.UploadCheckResp(m.UploadStatus.NEW, pending, s.rek))
            return
        fid = self._fresh(16)
        while fid in self.store or fid in self.init_sessions:
            fid = self._fresh(16)
        s = InitSession(msg.u_id, msg.h, src, self.ctx.now())
        self.init_sessions[fid] = s
        self.init_by_hash[msg.h] = fid
        self.ctx.set_timer(self.config.session_timeout, ("init-expiry", fid, s.started))
        self._request_initial_key(fid, s)

    def _request_initial_key(self, fid, s: InitSession):
        user = self.users.get(s.u_id)
        self.ctx.send(PRI, m.KeyProvisionReq(fid, s.u_id, m.ZERO_REF, user.pre_pk))
        self.ctx.set_timer(self.config.retry_interval, ("kpreq", fid))

    def _request_join_key(self, fid, u_id, ref):
        user = self.users.get(u_id)
        self.ctx.send(PRI, m.KeyProvisionReq(fid, u_id, ref, user.pre_pk))

    def _dedup_check(self, src, msg, fid):
        rec = self.store.get(fid)
        if msg.u_id in rec.holder_ids:
            self.ctx.send(src, error(ErrorCode.ALREADY_HOLDER, fid))
            return
        if fid in self.revocations:
            self.ctx.send(src, error(ErrorCode.BUSY, fid))
            return
        key = (fid, msg.u_id)
        s = self.dedup_sessions.get(key)
        if s is None:
            s = DedupSession(self._fresh(8), src, self.ctx.now())
            self.dedup_sessions[key] = s
            self.ctx.set_timer(self.config.session_timeout, ("dedup-expiry", fid, msg.u_id, s.ref))
        self.ctx.send(src, m.UploadCheckResp(m.UploadStatus.DUPLICATE, fid, None))
        self._request_join_key(fid, msg.u_id, s.ref)

    def _expire_init(self, fid, started):
        s = self.init_sessions.get(fid)
        if s is None or s.started != started:
            return
        self.store.discard_incomplete(fid)
        del self.init_sessions[fid]
        self.init_by_hash.pop(s.h, None)
        self._commit(m.Commit(m.CommitKind.CREATE, fid, s.u_id, m.ZERO_REF, 0))

    # -- key provisioning results from Pri-CSP

    def _on_KeyProvisionResp(self, src, msg):
        if src != PRI:
            return
        if msg.ref == m.ZERO_REF:
            self._initial_key(msg)
        else:
            self._join_key(msg)

    def _initial_key(self, msg):
        fid = msg.file_id
        s = self.init_sessions.get(fid)
        if s is None:
            if fid not in self.store and (fid, m.ZERO_REF) not in self.pending_commits:
                self._commit(m.Commit(m.CommitKind.CREATE, fid, msg.u_id, m.ZERO_REF, 0))
            return
        if s.u_id != msg.u_id or s.awaiting_data:
            return
        s.rek = msg.rek
        self.ctx.send(s.client, m.UploadCheckResp(m.UploadStatus.NEW, fid, msg.rek))

    def _join_key(self, msg):
        fid, ref = msg.file_id, msg.ref
        decided = self.join_decisions.get(ref)
        if decided is not None:
            self.ctx.send(PRI, m.Commit(m.CommitKind.JOIN, fid, msg.u_id, ref, decided[2]))
            return
        s = self.dedup_sessions.get((fid, msg.u_id))
        rec = self.store.get(fid)
        admit = (s is not None and s.ref == ref and rec is not None
                 and fid not in self.revocations and msg.u_id not in rec.holder_ids)
        if admit:
            self.store.add_holder_pub(fid, msg.u_id, msg.rek)
            ct = self.store.read_ct(fid)
            del self.dedup_sessions[(fid, msg.u_id)]
            self.ctx.send(s.client, m.DedupGrant(fid, msg.rek, ct))
        self.join_decisions[ref] = (fid, msg.u_id, int(admit))
        self.ctx.send(PRI, m.Commit(m.CommitKind.JOIN, fid, msg.u_id, ref, int(admit)))

    # -- initial upload: data

    def _on_StoreData(self, src, msg):
        if self._authentic(src, msg) is None:
            return
        fid = msg.file_id
        ack = m.Ack(m.StoreData.TAG, fid, msg.u_id, m.ZERO_REF)
        rec = self.store.get(fid)
        if rec is not None and msg.u_id in rec.holder_ids:
            self.ctx.send(src, ack)
            return
        s = self.init_sessions.get(fid)
        if s is None:
            self.ctx.send(src, error(ErrorCode.SESSION_EXPIRED, fid))
            return
        if s.u_id != msg.u_id or not s.awaiting_data or msg.rek != s.rek or len(msg.ct) < OVERHEAD:
            self.ctx.send(src, error(ErrorCode.BAD_REQUEST, fid))
            return
        self.store.create_record_pub(fid, msg.ct, s.h, msg.u_id, msg.rek)
        del self.init_sessions[fid]
        self.init_by_hash.pop(s.h, None)
        self._commit(m.Commit(m.CommitKind.CREATE, fid, msg.u_id, m.ZERO_REF, 1))
        self.ctx.send(src, ack)

    # -- download

    def _on_DownloadReq(self, src, msg):
        if self._authentic(src, msg) is None:
            return
        rec = self.store.get(msg.file_id)
        rek = rec.rek_for(msg.u_id) if rec is not None else None
        if rek is None:
            self.ctx.send(src, error(ErrorCode.ACCESS_DENIED, msg.file_id))
            return
        self.ctx.send(src, m.DownloadResp(msg.file_id, self.store.read_ct(msg.file_id), rek, rec.h))

    # -- revocation

    def _on_RevokeReq(self, src, msg):
        if self._authentic(src, msg) is None:
            return
        fid, u = msg.file_id, msg.u_id
        rv = self.revocations.get(fid)
        if rv is not None:
            if rv.u_id != u:
                self.ctx.send(src, error(ErrorCode.BUSY, fid))
            return
        if (fid, u) in self.finished_revocations:
            self.ctx.send(src, m.Ack(m.RevokeReq.TAG, fid, u, m.ZERO_REF))
            return
        rec = self.store.get(fid)
        if rec is None or u not in rec.holder_ids:
            self.ctx.send(src, error(ErrorCode.NOT_A_HOLDER, fid))
            return
        if any(k[0] == fid for k in self.dedup_sessions):
            self.ctx.send(src, error(ErrorCode.BUSY, fid))
            return
        is_owner = rec.owners[0][0] == u
        kind = m.Successor(msg.successor_kind) if msg.successor_kind in (0, 1, 2) else None
        if kind is None:
            self.ctx.send(src, error(ErrorCode.BAD_REQUEST, fid))
            return
        if kind != m.Successor.NONE and not is_owner:
            self.ctx.send(src, error(ErrorCode.NOT_OWNER, fid))
            return
        successor, to_pricsp = None, False
        if is_owner and len(rec.owners) > 1:
            if kind == m.Successor.USER:
                if msg.successor == u or msg.successor not in rec.holder_ids:
                    self.ctx.send(src, error(ErrorCode.SUCCESSOR_NOT_HOLDER, fid))
                    return
                successor = msg.successor
            elif kind == m.Successor.PRICSP:
                to_pricsp = True
            else:
                successor = rec.owners[1][0]
        remaining = self.store.revoke_holder(fid, u, successor=successor, to_pricsp=to_pricsp)
        rv = Revocation(u, src, self._fresh(8), m.RekeyMode.PURGE, "package")
        self.revocations[fid] = rv
        if not remaining:
            self._send_rekey_request(fid, rv)
            return
        rec = self.store.get(fid)
        if rec.managed_by_u0:
            self._start_delegated(fid, rv)
            return
        rv.state, rv.owner = "querying", rec.owners[0][0]
        self.ctx.send(du_address(rv.owner), m.OwnerQuery(fid, rv.round))
        self.ctx.set_timer(self.config.owner_timeout, ("owner-timeout", fid, rv.round))

    def _start_delegated(self, fid, rv: Revocation):
        rv.round = self._fresh(8)
        rv.mode, rv.state, rv.package = m.RekeyMode.DELEGATED, "package", None
        self._send_rekey_request(fid, rv)

    def _send_rekey_request(self, fid, rv: Revocation):
        ct = self.store.read_ct(fid) if rv.mode == m.RekeyMode.DELEGATED else b""
        self.ctx.send(PRI, m.RekeyRequest(fid, rv.u_id, rv.mode, rv.round, ct))
        self.ctx.set_timer(self.config.retry_interval, ("rekey-retry", fid, rv.round))

    def _owner_reply(self, src, fid, round_, accepted: bool):
        rv = self.revocations.get(fid)
        if rv is None or rv.state != "querying" or rv.round != round_ or src != du_address(rv.owner):
            return
        if not accepted:
            self._start_delegated(fid, rv)
            return
        rv.mode, rv.state = m.RekeyMode.OWNER_ONLINE, "package"
        self._send_rekey_request(fid, rv)

    def _on_RekeyPackage(self, src, msg):
        if src != PRI:
            return
        fid = msg.file_id
        rv = self.revocations.get(fid)
        if rv is None or rv.round != msg.round or rv.state != "package":
            return
        rec = self.store.get(fid)
        if {u for u, _ in msg.reks} != set(rec.holder_ids):
            log.warning("rekey package for %s does not match P1; retrying delegated", fid.hex())
            self._start_delegated(fid, rv)
            return
        if rv.mode == m.RekeyMode.DELEGATED:
            self.store.replace_after_rekey_pub(fid, msg.ct, msg.reks)
            rv.state = "committing"
            self._commit(m.Commit(m.CommitKind.REKEY, fid, rv.u_id, rv.round, 1))
            return
        rv.state, rv.package = "owner", msg
        rek_new = dict(msg.reks)[rv.owner]
        self.ctx.send(du_address(rv.owner), m.OwnerRekeyOffer(
            fid, rv.round, self.store.read_ct(fid), rec.rek_for(rv.owner), rek_new))
        self.ctx.set_timer(self.config.owner_timeout, ("owner-timeout", fid, rv.round))

    def _on_OwnerReupload(self, src, msg):
        if self._authentic(src, msg) is None:
            return
        fid = msg.file_id
        rv = self.revocations.get(fid)
        if rv is None or rv.state != "owner" or rv.round != msg.round or msg.u_id != rv.owner:
            return
        if len(msg.ct) < OVERHEAD:
            self._start_delegated(fid, rv)
            return
        self.store.replace_after_rekey_pub(fid, msg.ct, rv.package.reks)
        rv.state = "committing"
        self._commit(m.Commit(m.CommitKind.REKEY, fid, rv.u_id, rv.round, 1))

    def _finish_revocation(self, fid):
        rv = self.revocations.pop(fid)
        self.finished_revocations.add((fid, rv.u_id))
        self.ctx.send(rv.client, m.Ack(m.RevokeReq.TAG, fid, rv.u_id, m.ZERO_REF))

    # -- acknowledgements and errors

    def _on_Ack(self, src, msg):
        if msg.tag == m.OwnerQuery.TAG:
            self._owner_reply(src, msg.file_id, msg.ref, True)
            return
        if src != PRI:
            return
        if msg.tag == m.Commit.TAG:
            commit = self.pending_commits.pop((msg.file_id, msg.ref), None)
            if commit is not None and commit.kind == m.CommitKind.REKEY:
                rv = self.revocations.get(msg.file_id)
                if rv is not None and rv.round == msg.ref and rv.state == "committing":
                    self._finish_revocation(msg.file_id)
        elif msg.tag == m.RekeyRequest.TAG:
            rv = self.revocations.get(msg.file_id)
            if rv is not None and rv.round == msg.ref and rv.mode == m.RekeyMode.PURGE:
                self._finish_revocation(msg.file_id)

    def _on_Error(self, src, msg):
        code = msg.code
        if src != PRI:
            if code == ErrorCode.DECLINED:
                self._owner_reply(src, msg.file_id, msg.ref, False)
            return
        fid, ref = msg.file_id, msg.ref
        session = next(((k, s) for k, s in self.dedup_sessions.items() if s.ref == ref), None)
        if session is not None:
            key, s = session
            if code == ErrorCode.BUSY:
                self.ctx.set_timer(self.config.busy_backoff, ("kpreq-join", fid, key[1], ref))
            else:
                del self.dedup_sessions[key]
                if code != ErrorCode.POSSESSION_FAILED:
                    self.ctx.send(s.client, error(ErrorCode(code), fid))
            return
        rv = self.revocations.get(fid)
        if rv is not None and rv.round == ref and code == ErrorCode.AUTH_FAILURE:
            # The stored ciphertext does not open under the stored key: drop the
            # holder without rekeying.
            rv.state = "committing"
            self._commit(m.Commit(m.CommitKind.REKEY, fid, rv.u_id, rv.round, 0))

    def _on_ConsistencyReport(self, src, msg):
        if self._authentic(src, msg) is None:
            return
        self.consistency_reports.append((msg.file_id, msg.u_id))
