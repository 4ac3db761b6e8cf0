"""Pri-CSP: key authority (PRE owner u0), proxy, and possession verifier.

Pri-CSP keeps P2.  Its pending state:

* ``pending_init[F_id]``  key material minted for an initial upload, waiting
  for the DU's possession material and Pub-CSP's create commit.
* ``joins[ref]``          a dedup candidate, first while challenged, then
  holding the REK handed to Pub-CSP until Pub-CSP commits or aborts.
* ``pending_rekey[F_id]`` EK' and retained re-encryption keys for one
  revocation round, applied when Pub-CSP commits that round.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from .. import messages as m
from .. import possession, pre, symcrypto
from ..errors import AuthFailure, ErrorCode, NonceMismatch
from ..rng import default_rng
from ..store import PrivStore, UserDirectory, UserEntry
from .common import ProtocolConfig, error
from .runtime import PRI, PUB, Actor, du_address

log = logging.getLogger(__name__)


@dataclass
class PendingInit:
    u_id: bytes
    ek: pre.SecondLevelCiphertext
    rk: pre.ReEncryptionKey
    rek: pre.FirstLevelCiphertext
    regions: tuple | None = None
    digests: tuple | None = None


@dataclass
class Join:
    file_id: bytes
    u_id: bytes
    ref: bytes
    challenge: possession.Challenge | None
    rk: pre.ReEncryptionKey | None = None
    rek: pre.FirstLevelCiphertext | None = None
    started: float = 0.0

    @property
    def granted(self) -> bool:
        return self.rek is not None


@dataclass
class PendingRekey:
    round: bytes
    u_revoked: bytes
    mode: int
    ek: pre.SecondLevelCiphertext
    retained: tuple
    package: m.RekeyPackage = field(repr=False, default=None)


def load_or_create_keypair(path, rng=default_rng) -> pre.PreKeyPair:
    """Pri-CSP's long-term PRE key (u0). EK in every P2 record depends on it."""
    path = Path(path)
    if path.exists():
        return pre.PreKeyPair.from_secret(bytes(16), path.read_bytes())
    keys = pre.keygen1(bytes(16), rng=rng)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(keys.secret_bytes())
    os.replace(tmp, path)
    return keys


class PriCsp(Actor):
    address = PRI

    def __init__(self, store: PrivStore, users: UserDirectory, *, keypair: pre.PreKeyPair | None = None,
                 config: ProtocolConfig = ProtocolConfig(), rng=default_rng) -> None:
        self.store = store
        self.users = users
        self.config = config
        self.rng = rng
        self.keys = keypair or pre.keygen1(bytes(16), rng=rng)
        self.pending_init: dict[bytes, PendingInit] = {}
        self.aborted_inits: set[bytes] = set()
        self.joins: dict[bytes, Join] = {}
        self.pending_rekey: dict[bytes, PendingRekey] = {}
        self.consistency_reports = 0

    # -- dispatch

    def on_message(self, src, msg):
        handler = getattr(self, "_on_" + type(msg).__name__, None)
        if handler is None:
            log.debug("pri: ignoring %s from %s", type(msg).__name__, src)
            return
        handler(src, msg)

    def on_timer(self, token):
        kind = token[0]
        if kind == "resp":
            join = self.joins.get(token[1])
            if join is not None and join.granted:
                self._send_resp(join)
        elif kind == "challenge-expiry":
            join = self.joins.get(token[1])
            if join is not None and not join.granted:
                del self.joins[token[1]]

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

    # -- key provisioning

    def _on_KeyProvisionReq(self, src, msg):
        if src != PUB:
            return
        user = self.users.get(msg.u_id)
        if user is None or user.pre_pk != msg.pk:
            self.ctx.send(PUB, error(ErrorCode.UNKNOWN_USER, msg.file_id, msg.ref))
            return
        if msg.ref == m.ZERO_REF:
            self._provision_initial(msg)
        else:
            self._provision_join(msg)

    def _provision_initial(self, msg):
        fid = msg.file_id
        if fid in self.aborted_inits:
            return
        if fid in self.store:
            # Already created: the create commit overtook this retry.
            return
        p = self.pending_init.get(fid)
        if p is None:
            _k, mm = pre.encapsulate(rng=self.rng)
            ek = pre.en(self.keys.pk, mm, rng=self.rng)
            rk = pre.rg(self.keys.sk, msg.pk, delegator=self.keys.user_id, delegatee=msg.u_id)
            p = PendingInit(msg.u_id, ek, rk, pre.re_en(rk, ek))
            self.pending_init[fid] = p
        elif p.u_id != msg.u_id:
            self.ctx.send(PUB, error(ErrorCode.BUSY, fid))
            return
        self.ctx.send(PUB, m.KeyProvisionResp(fid, msg.u_id, m.ZERO_REF, p.rek))

    def _provision_join(self, msg):
        fid, ref = msg.file_id, msg.ref
        join = self.joins.get(ref)
        if join is not None:
            if join.granted:
                self._send_resp(join)
            else:
                self._send_challenge(join)
            return
        rec = self.store.get(fid)
        if rec is None:
            code = ErrorCode.BUSY if fid in self.pending_init else ErrorCode.UNKNOWN_FILE
            self.ctx.send(PUB, error(code, fid, ref))
            return
        if fid in self.pending_rekey:
            self.ctx.send(PUB, error(ErrorCode.BUSY, fid, ref))
            return
        if msg.u_id in rec.holder_ids:
            self.ctx.send(PUB, error(ErrorCode.ALREADY_HOLDER, fid, ref))
            return
        if any(j.file_id == fid and j.u_id == msg.u_id for j in self.joins.values()):
            # A stale session for the same pair is still open.
            self.ctx.send(PUB, error(ErrorCode.BUSY, fid, ref))
            return
        challenge = possession.issue_challenge(rec, self.rng, self.config.c_challenged)
        join = Join(fid, msg.u_id, ref, challenge, started=self.ctx.now())
        self.joins[ref] = join
        self.ctx.set_timer(self.config.session_timeout, ("challenge-expiry", ref))
        self._send_challenge(join)

    def _send_challenge(self, join: Join):
        c = join.challenge
        self.ctx.send(du_address(join.u_id), m.DedupChallenge(c.file_id, c.nonce, c.regions))

    def _send_resp(self, join: Join):
        self.ctx.send(PUB, m.KeyProvisionResp(join.file_id, join.u_id, join.ref, join.rek))
        self.ctx.set_timer(self.config.retry_interval, ("resp", join.ref))

    def _on_DedupResponse(self, src, msg):
        user = self.users.get(msg.u_id)
        if user is None or src != du_address(msg.u_id) or not m.check_signature(msg, user.sig_pk):
            self.ctx.send(src, error(ErrorCode.SIGNATURE_INVALID, msg.file_id))
            return
        join = next((j for j in self.joins.values()
                     if j.file_id == msg.file_id and j.u_id == msg.u_id and not j.granted), None)
        if join is None:
            self.ctx.send(src, error(ErrorCode.NONCE_MISMATCH, msg.file_id))
            return
        rec = self.store.get(msg.file_id)
        resp = possession.ChallengeResponse(msg.file_id, msg.nonce, msg.digests)
        try:
            ok = rec is not None and possession.verify_response(rec, join.challenge, resp)
        except NonceMismatch:
            self.ctx.send(src, error(ErrorCode.NONCE_MISMATCH, msg.file_id))
            return
        if not ok:
            del self.joins[join.ref]
            self.ctx.send(src, error(ErrorCode.POSSESSION_FAILED, msg.file_id, join.ref))
            self.ctx.send(PUB, error(ErrorCode.POSSESSION_FAILED, msg.file_id, join.ref))
            return
        join.rk = pre.rg(self.keys.sk, user.pre_pk, delegator=self.keys.user_id, delegatee=msg.u_id)
        join.rek = pre.re_en(join.rk, rec.ek)
        join.challenge = None  # nonce is single-use
        self._send_resp(join)

    # -- initial upload: possession material and create commit

    def _on_RegisterPossession(self, src, msg):
        user = self.users.get(msg.u_id)
        if user is None or src != du_address(msg.u_id) or not m.check_signature(msg, user.sig_pk):
            self.ctx.send(src, error(ErrorCode.SIGNATURE_INVALID, msg.file_id))
            return
        ack = m.Ack(m.RegisterPossession.TAG, msg.file_id, msg.u_id, m.ZERO_REF)
        rec = self.store.get(msg.file_id)
        if rec is not None and msg.u_id in rec.holder_ids:
            self.ctx.send(src, ack)
            return
        p = self.pending_init.get(msg.file_id)
        if p is None or p.u_id != msg.u_id:
            self.ctx.send(src, error(ErrorCode.SESSION_EXPIRED, msg.file_id))
            return
        if len(msg.regions) != len(msg.digests) or len(msg.regions) < self.config.k_retained:
            self.ctx.send(src, error(ErrorCode.BAD_REQUEST, msg.file_id))
            return
        if p.regions is None:
            p.regions, p.digests = possession.subsample(
                msg.regions, msg.digests, self.config.k_retained, self.rng)
        self.ctx.send(src, ack)

    def _on_Commit(self, src, msg):
        if src != PUB:
            return
        if msg.kind == m.CommitKind.CREATE:
            self._commit_create(msg)
        elif msg.kind == m.CommitKind.JOIN:
            self._commit_join(msg)
        elif msg.kind == m.CommitKind.REKEY:
            self._commit_rekey(msg)

    def _commit_create(self, msg):
        fid = msg.file_id
        ack = m.Ack(m.Commit.TAG, fid, msg.u_id, msg.ref)
        if fid in self.store:
            self.ctx.send(PUB, ack)
            return
        p = self.pending_init.get(fid)
        if not msg.decision:
            self.pending_init.pop(fid, None)
            self.aborted_inits.add(fid)
            self.ctx.send(PUB, ack)
            return
        if p is None or p.regions is None:
            log.warning("create commit for %s without possession material", fid.hex())
            self.ctx.send(PUB, error(ErrorCode.SESSION_EXPIRED, fid, msg.ref))
            return
        self.store.create_record_priv(fid, p.regions, p.digests, p.ek, p.u_id, p.rk)
        del self.pending_init[fid]
        self.ctx.send(PUB, ack)

    def _commit_join(self, msg):
        join = self.joins.get(msg.ref)
        if join is None or not join.granted:
            return
        if msg.decision:
            rec = self.store.get(join.file_id)
            if rec is not None and join.u_id not in rec.holder_ids:
                self.store.add_holder_priv(join.file_id, join.u_id, join.rk)
        del self.joins[msg.ref]

    # -- revocation

    def _on_RekeyRequest(self, src, msg):
        if src != PUB:
            return
        fid = msg.file_id
        current = self.pending_rekey.get(fid)
        if current is not None and current.round == msg.round:
            self.ctx.send(PUB, current.package)
            return
        rec = self.store.get(fid)
        if rec is None:
            if fid in self.pending_init:
                self.ctx.send(PUB, error(ErrorCode.BUSY, fid, msg.round))
            elif msg.mode == m.RekeyMode.PURGE:
                self.ctx.send(PUB, m.Ack(m.RekeyRequest.TAG, fid, msg.u_revoked, msg.round))
            else:
                self.ctx.send(PUB, error(ErrorCode.UNKNOWN_FILE, fid, msg.round))
            return
        if any(j.file_id == fid for j in self.joins.values()):
            self.ctx.send(PUB, error(ErrorCode.BUSY, fid, msg.round))
            return
        if msg.mode == m.RekeyMode.PURGE:
            if msg.u_revoked in rec.holder_ids:
                self.store.revoke_holder(fid, msg.u_revoked)
            self.pending_rekey.pop(fid, None)
            self.ctx.send(PUB, m.Ack(m.RekeyRequest.TAG, fid, msg.u_revoked, msg.round))
            return
        retained_rks = [(u, rk) for u, rk in rec.holders if u != msg.u_revoked]
        _k_new, m_new = pre.encapsulate(rng=self.rng)
        ek_new = pre.en(self.keys.pk, m_new, rng=self.rng)
        ct_new = b""
        if msg.mode == m.RekeyMode.DELEGATED:
            try:
                plaintext = symcrypto.decrypt(pre.derive_key(pre.de2(self.keys.sk, rec.ek)), msg.ct)
            except AuthFailure:
                self.ctx.send(PUB, error(ErrorCode.AUTH_FAILURE, fid, msg.round))
                return
            ct_new = symcrypto.encrypt(pre.derive_key(m_new), plaintext, rng=self.rng)
        reks = tuple((u, pre.re_en(rk, ek_new)) for u, rk in retained_rks)
        package = m.RekeyPackage(fid, msg.round, ct_new, reks)
        self.pending_rekey[fid] = PendingRekey(msg.round, msg.u_revoked, msg.mode, ek_new,
                                               tuple(retained_rks), package)
        self.ctx.send(PUB, package)

    def _commit_rekey(self, msg):
        fid = msg.file_id
        ack = m.Ack(m.Commit.TAG, fid, msg.u_id, msg.ref)
        p = self.pending_rekey.get(fid)
        if p is None or p.round != msg.ref:
            # Already applied, or a stale round that Pub-CSP abandoned.
            if not msg.decision:
                rec = self.store.get(fid)
                if rec is not None and msg.u_id in rec.holder_ids:
                    self.store.revoke_holder(fid, msg.u_id)
            self.ctx.send(PUB, ack)
            return
        if msg.decision:
            self.store.replace_after_rekey_priv(fid, p.ek, p.retained)
        else:
            rec = self.store.get(fid)
            if rec is not None and p.u_revoked in rec.holder_ids:
                self.store.revoke_holder(fid, p.u_revoked)
        del self.pending_rekey[fid]
        self.ctx.send(PUB, ack)

    def _on_ConsistencyReport(self, src, msg):
        self.consistency_reports += 1

    def _on_Error(self, src, msg):
        log.debug("pri: error %s from %s", ErrorCode(msg.code).name, src)
