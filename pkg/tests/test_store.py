import pytest

from dedupvault import pre, symcrypto
from dedupvault.errors import AlreadyHolder, DuplicateFileId, NotAHolder, SuccessorNotHolder, UnknownFile
from dedupvault.store import FileRecordPriv, FileRecordPub, PrivStore, PubStore, SimulatedCrash, UserDirectory, UserEntry
from samples import PK, REGIONS, DIGESTS, REK

F1, F2 = b"\x01" * 16, b"\x02" * 16
U1, U2, U3 = b"\xa1" * 16, b"\xa2" * 16, b"\xa3" * 16
H1, H2 = b"\x11" * 32, b"\x22" * 32


def crash_at(stage):
    def hook(s):
        if s == stage:
            raise SimulatedCrash(s)
    return hook


@pytest.fixture
def ek():
    kp = pre.keygen1(bytes(16), sk=9)
    return pre.en(kp.pk, pre.encapsulate(s=2)[1], r=4)


@pytest.fixture
def rk():
    return pre.rg(pre.keygen1(bytes(16), sk=9).sk, PK)


def test_dup_check(tmp_path):
    s = PubStore(tmp_path)
    assert s.dup_check(H1) is None
    s.create_record_pub(F1, b"ct1", H1, U1, REK)
    s.create_record_pub(F2, b"ct2", H2, U1, REK)
    assert s.dup_check(H1) == F1 and s.dup_check(H2) == F2


def test_create_read_back_and_reopen(tmp_path):
    s = PubStore(tmp_path)
    rec = s.create_record_pub(F1, b"ciphertext", H1, U1, REK)
    assert s.get(F1) == rec and s.read_ct(F1) == b"ciphertext"
    encoded = (tmp_path / F1.hex() / "record.bin").read_bytes()
    assert encoded == rec.encode()
    assert FileRecordPub.decode(encoded) == rec
    again = PubStore(tmp_path)
    assert again.get(F1) == rec and again.dup_check(H1) == F1 and again.read_ct(F1) == b"ciphertext"


def test_priv_record_round_trip(tmp_path, ek, rk):
    s = PrivStore(tmp_path)
    rec = s.create_record_priv(F1, REGIONS, DIGESTS, ek, U1, rk)
    assert FileRecordPriv.decode(rec.encode()) == rec
    assert PrivStore(tmp_path).get(F1) == rec


@pytest.mark.parametrize("stage", ["blob-written", "record-temp-written"])
def test_crash_during_create_reopens_empty(tmp_path, stage):
    s = PubStore(tmp_path, crash_hook=crash_at(stage))
    with pytest.raises(SimulatedCrash):
        s.create_record_pub(F1, b"ct", H1, U1, REK)
    reopened = PubStore(tmp_path)
    assert len(reopened) == 0 and reopened.blob_count() == 0
    assert list(tmp_path.iterdir()) == []
    reopened.create_record_pub(F1, b"ct", H1, U1, REK)


def test_retry_create_after_crash_in_same_process(tmp_path):
    hook_on = [True]
    s = PubStore(tmp_path, crash_hook=lambda st: hook_on[0] and (_ for _ in ()).throw(SimulatedCrash(st)))
    with pytest.raises(SimulatedCrash):
        s.create_record_pub(F1, b"ct", H1, U1, REK)
    hook_on[0] = False
    s.create_record_pub(F1, b"ct", H1, U1, REK)
    assert s.blob_count() == 1


def test_crash_during_add_keeps_old_record(tmp_path):
    s = PubStore(tmp_path)
    before = s.create_record_pub(F1, b"ct", H1, U1, REK)
    s.crash_hook = crash_at("record-temp-written")
    with pytest.raises(SimulatedCrash):
        s.add_holder_pub(F1, U2, REK)
    assert s.get(F1) == before
    assert PubStore(tmp_path).get(F1) == before


def test_duplicate_file_id(tmp_path, ek, rk):
    s = PubStore(tmp_path)
    s.create_record_pub(F1, b"ct", H1, U1, REK)
    with pytest.raises(DuplicateFileId):
        s.create_record_pub(F1, b"ct", H2, U1, REK)
    p = PrivStore(tmp_path / "p")
    p.create_record_priv(F1, REGIONS, DIGESTS, ek, U1, rk)
    with pytest.raises(DuplicateFileId):
        p.create_record_priv(F1, REGIONS, DIGESTS, ek, U1, rk)


def test_add_holder(tmp_path, ek, rk):
    s = PubStore(tmp_path / "pub")
    p = PrivStore(tmp_path / "pri")
    s.create_record_pub(F1, b"ct", H1, U1, REK)
    p.create_record_priv(F1, REGIONS, DIGESTS, ek, U1, rk)
    s.add_holder_pub(F1, U2, REK)
    p.add_holder_priv(F1, U2, rk)
    assert s.get(F1).owners == ((U1, REK), (U2, REK))
    assert s.get(F1).holder_ids == p.get(F1).holder_ids
    with pytest.raises(AlreadyHolder):
        s.add_holder_pub(F1, U1, REK)
    with pytest.raises(AlreadyHolder):
        p.add_holder_priv(F1, U2, rk)
    with pytest.raises(UnknownFile):
        s.add_holder_pub(F2, U1, REK)


def test_revoke(tmp_path, ek, rk):
    s = PubStore(tmp_path / "pub")
    p = PrivStore(tmp_path / "pri")
    s.create_record_pub(F1, b"ct", H1, U1, REK)
    s.add_holder_pub(F1, U2, REK)
    p.create_record_priv(F1, REGIONS, DIGESTS, ek, U1, rk)
    p.add_holder_priv(F1, U2, rk)
    assert s.revoke_holder(F1, U2) == [U1]
    assert p.revoke_holder(F1, U2) == [U1]
    with pytest.raises(NotAHolder):
        s.revoke_holder(F1, U3)
    with pytest.raises(NotAHolder):
        p.revoke_holder(F1, U3)
    assert s.revoke_holder(F1, U1) == [] and p.revoke_holder(F1, U1) == []
    assert s.blob_count() == 0 and F1 not in s and F1 not in p
    assert s.dup_check(H1) is None
    assert not (tmp_path / "pub" / F1.hex()).exists()


def test_owner_handoff(tmp_path):
    s = PubStore(tmp_path)
    s.create_record_pub(F1, b"ct", H1, U1, REK)
    s.add_holder_pub(F1, U2, REK)
    s.add_holder_pub(F1, U3, REK)
    with pytest.raises(SuccessorNotHolder):
        s.revoke_holder(F1, U1, successor=b"\xff" * 16)
    assert s.revoke_holder(F1, U1, successor=U3) == [U3, U2]
    assert s.revoke_holder(F1, U3, to_pricsp=True) == [U2]
    assert s.get(F1).managed_by_u0
    assert PubStore(tmp_path).get(F1).managed_by_u0


def test_replace_after_rekey(tmp_path, ek, rk):
    key, m = pre.encapsulate(s=21)
    ct = symcrypto.encrypt(key, b"x" * 100)
    s = PubStore(tmp_path / "pub")
    s.create_record_pub(F1, ct, H1, U1, REK)
    s.add_holder_pub(F1, U2, REK)
    s.revoke_holder(F1, U2)
    key2, m2 = pre.encapsulate(s=22)
    ct2 = symcrypto.encrypt(key2, b"x" * 100)
    kp = pre.keygen1(U1, sk=9)
    new_rek = pre.re_en(pre.rg(kp.sk, kp.pk), pre.en(kp.pk, m2, r=3))
    rec = s.replace_after_rekey_pub(F1, ct2, [(U1, new_rek)])
    assert rec.owners == ((U1, new_rek),) and rec.h == H1 and rec.blob_gen == 1
    assert s.read_ct(F1) == ct2 and s.blob_count() == 1
    with pytest.raises(symcrypto.AuthFailure):
        symcrypto.decrypt(key, s.read_ct(F1))
    with pytest.raises(ValueError):
        s.replace_after_rekey_pub(F1, ct2, [(U2, new_rek)])

    p = PrivStore(tmp_path / "pri")
    p.create_record_priv(F1, REGIONS, DIGESTS, ek, U1, rk)
    ek2 = pre.en(kp.pk, m2, r=3)
    rec2 = p.replace_after_rekey_priv(F1, ek2, [(U1, rk)])
    assert rec2.ek == ek2 and rec2.regions == REGIONS and rec2.digests == DIGESTS
    p.replace_after_rekey_priv(F1, ek2, [])
    assert F1 not in p


def test_crash_during_rekey_keeps_old_generation(tmp_path):
    s = PubStore(tmp_path)
    s.create_record_pub(F1, b"old", H1, U1, REK)
    s.crash_hook = crash_at("record-temp-written")
    with pytest.raises(SimulatedCrash):
        s.replace_after_rekey_pub(F1, b"new", [(U1, REK)])
    reopened = PubStore(tmp_path)
    assert reopened.read_ct(F1) == b"old" and reopened.blob_count() == 1


def test_crash_before_delete(tmp_path):
    s = PubStore(tmp_path, crash_hook=crash_at("before-delete"))
    s.create_record_pub(F1, b"ct", H1, U1, REK)
    with pytest.raises(SimulatedCrash):
        s.revoke_holder(F1, U1)
    assert PubStore(tmp_path).get(F1).holder_ids == [U1]


def test_unknown_file(tmp_path):
    s = PubStore(tmp_path)
    with pytest.raises(UnknownFile):
        s.read_ct(F1)
    with pytest.raises(UnknownFile):
        s.revoke_holder(F1, U1)
    with pytest.raises(UnknownFile):
        PrivStore(tmp_path / "p").delete(F1)


def test_user_directory(tmp_path):
    d = UserDirectory(tmp_path)
    d.add(UserEntry(U1, b"k" * 32, PK))
    assert U1 in d and len(d) == 1
    again = UserDirectory(tmp_path)
    assert again.get(U1) == UserEntry(U1, b"k" * 32, PK)
    again.crash_hook = crash_at("users-temp-written")
    with pytest.raises(SimulatedCrash):
        again.add(UserEntry(U2, b"k" * 32, PK))
    assert len(UserDirectory(tmp_path)) == 1
