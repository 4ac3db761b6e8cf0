import asyncio
from collections import defaultdict

import pytest

from dedupvault import messages as m
from dedupvault.protocol import Deployment
from dedupvault.protocol.runtime import PRI, PUB
from dedupvault.rng import DeterministicRng
from dedupvault.transport import MemoryNetwork
from dedupvault.transport.tcp import TcpNode, run_flow

DATA = DeterministicRng("shared").bytes(20_000)


def scenario(dep):
    u1, u2 = dep.add_user(), dep.add_user()
    fid = dep.initial_upload(u1, DATA)
    dep.dedup_upload(u2, DATA)
    dep.revoke_holder_flow(fid, u2)
    assert dep.download(u1, fid) == DATA
    return fid


def test_same_seed_same_transcript(tmp_path):
    runs = []
    for i in range(2):
        with Deployment(tmp_path / str(i), seed=42) as dep:
            scenario(dep)
            runs.append([(e.time, e.src, e.dst, e.frame) for e in dep.net.transcript])
    assert runs[0] == runs[1]


def test_different_seed_different_transcript(tmp_path):
    frames = []
    for seed in (1, 2):
        with Deployment(tmp_path / str(seed), seed=seed) as dep:
            scenario(dep)
            frames.append([e.frame for e in dep.net.transcript])
    assert frames[0] != frames[1]


def test_dropped_rekey_package_converges(deployment):
    dep = deployment
    u1, u2 = dep.add_user(), dep.add_user()
    fid = dep.initial_upload(u1, DATA)
    dep.dedup_upload(u2, DATA)
    gen = dep.pub.store.get(fid).blob_gen
    dep.net.drop_next(m.RekeyPackage.TAG, count=2)
    dep.revoke_holder_flow(fid, u2)
    dropped = [e for e in dep.net.transcript if e.tag == m.RekeyPackage.TAG and e.dropped]
    assert len(dropped) == 2
    assert dep.pub.store.get(fid).blob_gen == gen + 1
    assert dep.pub.store.get(fid).holder_ids == [u1.u_id]
    assert dep.download(u1, fid) == DATA
    assert dep.check_invariants().ok
    assert not dep.pri.pending_rekey


@pytest.mark.parametrize("tag", [m.Commit.TAG, m.Ack.TAG, m.KeyProvisionResp.TAG, m.DedupGrant.TAG,
                                 m.StoreData.TAG, m.RegisterPossession.TAG, m.DedupChallenge.TAG])
def test_single_drops_anywhere_converge(deployment, tag):
    dep = deployment
    u1, u2 = dep.add_user(), dep.add_user()
    dep.net.drop_next(tag, count=1)
    fid = dep.initial_upload(u1, DATA)
    dep.net.drop_next(tag, count=1)
    dep.dedup_upload(u2, DATA)
    dep.net.drop_next(tag, count=1)
    dep.revoke_holder_flow(fid, u1)
    assert dep.download(u2, fid) == DATA
    assert dep.check_invariants().ok


def test_duplicate_dedup_response_rejected(deployment):
    dep = deployment
    u1, u2 = dep.add_user(), dep.add_user()
    fid = dep.initial_upload(u1, DATA)
    dep.dedup_upload(u2, DATA)
    replay = next(e for e in dep.net.transcript if e.tag == m.DedupResponse.TAG)
    grants = len([e for e in dep.net.transcript if e.tag == m.DedupGrant.TAG])
    mark = len(dep.net.transcript)
    dep.net.inject(replay.src, replay.dst, replay.frame)
    dep.net.run()
    replies = [m.decode(e.frame) for e in dep.net.transcript[mark:] if e.src == PRI]
    assert [type(r) for r in replies] == [m.Error]
    assert replies[0].code == m.ErrorCode.NONCE_MISMATCH
    assert len([e for e in dep.net.transcript if e.tag == m.DedupGrant.TAG]) == grants
    assert dep.pri.store.get(fid).holder_ids == [u1.u_id, u2.u_id]


def test_replayed_response_from_earlier_session_rejected(deployment):
    dep = deployment
    u1, u2 = dep.add_user(), dep.add_user()
    fid = dep.initial_upload(u1, DATA)
    dep.dedup_upload(u2, DATA)
    old = next(e for e in dep.net.transcript if e.tag == m.DedupResponse.TAG)
    dep.revoke_holder_flow(fid, u2)
    # u2 tries again without the data, replaying its old answer to a fresh challenge
    dep.net.drop_next(m.DedupResponse.TAG, count=1, src=u2.address)
    flow = dep.net.call(u2.address, u2.start_upload, DATA)
    dep.net.run_until(lambda: any(e.tag == m.DedupResponse.TAG and e.dropped for e in dep.net.transcript))
    dep.net.inject(old.src, old.dst, old.frame)
    dep.net.run_until(lambda: flow.done)
    dep.net.run()
    errors = [m.decode(e.frame) for e in dep.net.transcript
              if e.src == PRI and e.dst == u2.address and e.tag == m.Error.TAG]
    assert any(err.code == m.ErrorCode.NONCE_MISMATCH for err in errors)
    # its own honest retry still goes through afterwards
    assert flow.error is None
    assert dep.download(u2, fid) == DATA


def test_garbage_frames_are_counted_not_fatal(deployment):
    dep = deployment
    dep.net.inject("du:00", PUB, b"\x00\x00\x00\x03\x01\xff\x00")
    dep.net.inject("du:00", PRI, b"\x00\x00\x00\x02\x09\x01")
    dep.net.run()
    assert dep.net.decode_failures == 2
    u = dep.add_user()
    assert dep.download(u, dep.initial_upload(u, DATA)) == DATA


def test_random_loss_and_duplication(tmp_path):
    net = MemoryNetwork(7, jitter=0.01, drop_rate=0.1, dup_rate=0.1)
    with Deployment(tmp_path, seed=7, network=net) as dep:
        u1, u2, u3 = dep.add_user(), dep.add_user(), dep.add_user()
        fid = dep.initial_upload(u1, DATA)
        dep.dedup_upload(u2, DATA)
        dep.dedup_upload(u3, DATA)
        dep.revoke_holder_flow(fid, u2)
        assert dep.download(u3, fid) == DATA
        assert dep.check_invariants().ok
        assert any(e.dropped for e in net.transcript)


# -- TCP ------------------------------------------------------------------------


def per_link(entries):
    links = defaultdict(list)
    for src, dst, frame in entries:
        links[(src, dst)].append(frame)
    return dict(links)


async def tcp_scenario(dep, users):
    transcript = []
    pub = TcpNode(dep.pub, transcript=transcript)
    pri = TcpNode(dep.pri, transcript=transcript)
    pub_port = await pub.listen()
    pri_port = await pri.listen()
    await pub.connect(PRI, "127.0.0.1", pri_port)
    nodes = []
    for du in users:
        node = TcpNode(du, transcript=transcript)
        await node.connect(PUB, "127.0.0.1", pub_port)
        await node.connect(PRI, "127.0.0.1", pri_port)
        nodes.append(node)
    await asyncio.sleep(0.05)
    u1, u2 = nodes
    for node in nodes:
        await run_flow(node, node.actor.start_enroll, timeout=10)
    fid = (await run_flow(u1, u1.actor.start_upload, DATA, "new", timeout=10))["file_id"]
    await run_flow(u2, u2.actor.start_upload, DATA, "dup", timeout=10)
    await asyncio.sleep(0.05)
    u1.actor.rekey_willing = False  # delegated mode, as revoke_holder_flow defaults to
    await run_flow(u2, u2.actor.start_revoke, fid, timeout=10)
    got = await run_flow(u1, u1.actor.start_download, fid, timeout=10)
    await asyncio.sleep(0.05)
    for node in (pub, pri, *nodes):
        await node.close()
    return got, transcript


def test_tcp_matches_memory_per_link(tmp_path):
    with Deployment(tmp_path / "mem", seed=9) as dep:
        u1, u2 = dep.add_user(), dep.add_user()
        fid = dep.initial_upload(u1, DATA)
        dep.dedup_upload(u2, DATA)
        dep.revoke_holder_flow(fid, u2)
        assert dep.download(u1, fid) == DATA
        mem = per_link((e.src, e.dst, e.frame) for e in dep.net.transcript
                       if not (e.tag == m.Enroll.TAG or (e.tag == m.Ack.TAG and e.frame[6] == m.Enroll.TAG)))

    with Deployment(tmp_path / "tcp", seed=9) as dep:
        users = [dep.add_user(enroll=False), dep.add_user(enroll=False)]
        got, transcript = asyncio.run(tcp_scenario(dep, users))
    assert got == DATA
    tcp = per_link((s, d, f) for s, d, f in transcript
                   if not (f[5] == m.Enroll.TAG or (f[5] == m.Ack.TAG and f[6] == m.Enroll.TAG)))
    assert tcp == mem
