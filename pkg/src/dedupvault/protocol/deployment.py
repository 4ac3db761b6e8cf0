"""An in-process deployment of all three actors on the simulated network.

Tests, the benchmark harness and ``du --in-memory`` drive flows through
this class.  Each flow method starts the DU's flow, runs the network until
the flow ends and then until the network is quiet, and returns the DU's
result or raises its error.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path

from .. import messages as m
from ..errors import NotOwner, SuccessorNotHolder
from ..rng import DeterministicRng, default_rng
from ..store import PrivStore, PubStore, UserDirectory
from ..transport.memory import MemoryNetwork
from .common import ProtocolConfig
from .du import DataUser, raise_for
from .pricsp import PriCsp
from .pubcsp import PubCsp

OWNER_ONLINE = m.RekeyMode.OWNER_ONLINE
DELEGATED = m.RekeyMode.DELEGATED
PRICSP = "pricsp"


@dataclass
class InvariantReport:
    single_copy: bool
    holder_agreement: bool
    durability: bool
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.single_copy and self.holder_agreement and self.durability


class Deployment:
    def __init__(self, root=None, *, seed: int | None = None, config: ProtocolConfig = ProtocolConfig(),
                 network: MemoryNetwork | None = None, crash_hook=None, pri_keypair=None) -> None:
        if root is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="dedupvault-")
            root = self._tmp.name
        self.root = Path(root)
        self.config = config
        self.seed = seed
        self._rng = DeterministicRng(seed) if seed is not None else default_rng
        self.net = network or MemoryNetwork(seed or 0)
        self.crash_hook = crash_hook
        self.pub = PubCsp(PubStore(self.root / "pub", crash_hook=crash_hook),
                          UserDirectory(self.root / "pub"), config=config, rng=self._fork("pub"))
        self.pri = PriCsp(PrivStore(self.root / "pri", crash_hook=crash_hook),
                          UserDirectory(self.root / "pri"), config=config, rng=self._fork("pri"),
                          keypair=pri_keypair)
        self.net.attach(self.pub)
        self.net.attach(self.pri)
        self.users: list[DataUser] = []

    def _fork(self, label: str):
        return self._rng.fork(label) if isinstance(self._rng, DeterministicRng) else self._rng

    def close(self) -> None:
        tmp = getattr(self, "_tmp", None)
        if tmp is not None:
            tmp.cleanup()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- running flows

    def drive(self, du: DataUser, start, *args):
        flow = self.net.call(du.address, start, *args)
        self.net.run_until(lambda: flow.done)
        self.net.run()
        return raise_for(flow)

    def add_user(self, *, enroll: bool = True, u_id: bytes | None = None) -> DataUser:
        du = DataUser(u_id, config=self.config, rng=self._fork(f"du{len(self.users)}"))
        return self.attach_user(du, enroll=enroll)

    def attach_user(self, du: DataUser, *, enroll: bool = True) -> DataUser:
        self.net.attach(du)
        self.users.append(du)
        if enroll:
            self.drive(du, du.start_enroll)
        return du

    def upload(self, du: DataUser, data: bytes) -> dict:
        return self.drive(du, du.start_upload, data)

    def initial_upload(self, du: DataUser, data: bytes) -> bytes:
        return self.drive(du, du.start_upload, data, "new")["file_id"]

    def dedup_upload(self, du: DataUser, data: bytes) -> bytes:
        return self.drive(du, du.start_upload, data, "dup")["file_id"]

    def download(self, du: DataUser, file_id: bytes) -> bytes:
        return self.drive(du, du.start_download, file_id)

    def owner_of(self, file_id: bytes) -> DataUser | None:
        rec = self.pub.store.get(file_id)
        if rec is None:
            return None
        return next((u for u in self.users if u.u_id == rec.owners[0][0]), None)

    def _set_owner_mode(self, owner: DataUser | None, owner_mode) -> None:
        for du in self.users:
            du.rekey_willing = True
        if owner is not None:
            owner.rekey_willing = owner_mode == OWNER_ONLINE

    def revoke_holder_flow(self, file_id: bytes, du: DataUser, owner_mode=DELEGATED) -> dict:
        rec = self.pub.store.require(file_id)
        owner = self.owner_of(file_id)
        if rec.owners[0][0] == du.u_id and len(rec.owners) > 1:
            owner = next(u for u in self.users if u.u_id == rec.owners[1][0])
        self._set_owner_mode(owner, owner_mode)
        return self.drive(du, du.start_revoke, file_id)

    def revoke_owner_flow(self, file_id: bytes, du_owner: DataUser, successor, owner_mode=DELEGATED) -> dict:
        rec = self.pub.store.require(file_id)
        if rec.owners[0][0] != du_owner.u_id:
            raise NotOwner(du_owner.u_id.hex())
        if successor == PRICSP:
            kind, succ_id, new_owner = m.Successor.PRICSP, m.ZERO_ID, None
        else:
            if successor.u_id not in rec.holder_ids or successor is du_owner:
                raise SuccessorNotHolder(successor.u_id.hex())
            kind, succ_id, new_owner = m.Successor.USER, successor.u_id, successor
        self._set_owner_mode(new_owner, owner_mode)
        return self.drive(du_owner, du_owner.start_revoke, file_id, kind, succ_id)

    # -- invariants

    def check_invariants(self) -> InvariantReport:
        """Single-copy, P1/P2 holder agreement and on-disk durability, at quiescence."""
        pub, pri = self.pub.store, self.pri.store
        problems = []
        hashes = {pub.get(f).h for f in pub.file_ids()}
        single = pub.blob_count() == len(hashes) == len(pub)
        if not single:
            problems.append(f"blobs={pub.blob_count()} hashes={len(hashes)} records={len(pub)}")
        agree = set(pub.file_ids()) == set(pri.file_ids()) and all(
            set(pub.get(f).holder_ids) == set(pri.get(f).holder_ids) for f in pub.file_ids())
        if not agree:
            problems.append("P1/P2 holder sets differ")
        durable = True
        pub2 = PubStore(pub.root)
        pri2 = PrivStore(pri.root)
        if {f: pub2.get(f) for f in pub2.file_ids()} != {f: pub.get(f) for f in pub.file_ids()}:
            durable = False
        if {f: pri2.get(f) for f in pri2.file_ids()} != {f: pri.get(f) for f in pri.file_ids()}:
            durable = False
        if durable and any(pub2.read_ct(f) != pub.read_ct(f) for f in pub.file_ids()):
            durable = False
        if not durable:
            problems.append("reopened stores differ from live state")
        return InvariantReport(single, agree, durable, "; ".join(problems))
