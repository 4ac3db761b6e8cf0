import hashlib

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dedupvault import symcrypto
from dedupvault.errors import AuthFailure


def test_empty_hash_constant():
    assert symcrypto.hash(b"").hex() == (
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")


def test_hash_matches_hashlib():
    assert symcrypto.hash(b"abc") == hashlib.sha256(b"abc").digest()


@given(st.binary(max_size=4096))
def test_round_trip_and_length(data):
    key = bytes(range(16))
    ct = symcrypto.encrypt(key, data)
    assert len(ct) == len(data) + 28
    assert symcrypto.decrypt(key, ct) == data


def test_large_round_trip(rng):
    data = rng.bytes(64 * 1024 * 1024)
    key = rng.bytes(16)
    assert symcrypto.decrypt(key, symcrypto.encrypt(key, data, rng=rng)) == data


def test_encrypt_is_probabilistic():
    key = bytes(16)
    assert symcrypto.encrypt(key, b"x") != symcrypto.encrypt(key, b"x")


def test_wrong_key_fails_1000_of_1000(rng):
    data = b"payload" * 10
    for _ in range(1000):
        k1, k2 = rng.bytes(16), rng.bytes(16)
        if k1 == k2:
            continue
        with pytest.raises(AuthFailure):
            symcrypto.decrypt(k2, symcrypto.encrypt(k1, data, rng=rng))


def test_truncated_ciphertext_fails():
    key = bytes(16)
    ct = symcrypto.encrypt(key, b"hello world")
    for cut in (1, 16, len(ct) - 1):
        with pytest.raises(AuthFailure):
            symcrypto.decrypt(key, ct[:-cut])


@given(st.binary(min_size=1, max_size=256), st.data())
def test_any_bit_flip_is_detected(data, draw):
    key = bytes(range(16))
    ct = bytearray(symcrypto.encrypt(key, data))
    bit = draw.draw(st.integers(0, len(ct) * 8 - 1))
    ct[bit // 8] ^= 1 << (bit % 8)
    with pytest.raises(AuthFailure):
        symcrypto.decrypt(key, bytes(ct))


def test_key_length_enforced():
    with pytest.raises(ValueError):
        symcrypto.encrypt(bytes(32), b"x")


def test_signatures(rng):
    kp = symcrypto.SigKeyPair.generate(rng)
    msg = b"dp = H(F)"
    sig = symcrypto.sign(kp, msg)
    assert len(sig) == 64 and len(kp.public) == 32
    assert symcrypto.verify(kp.public, msg, sig)
    assert symcrypto.sign(kp, msg) == sig
    flipped = bytes([msg[0] ^ 1]) + msg[1:]
    assert not symcrypto.verify(kp.public, flipped, sig)
    assert not symcrypto.verify(kp.public, msg, b"short")
    assert not symcrypto.verify(b"bad", msg, sig)


def test_ed25519_rfc8032_vector():
    # RFC 8032 section 7.1, test 1 (empty message)
    seed = bytes.fromhex("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60")
    kp = symcrypto.SigKeyPair.from_seed(seed)
    assert kp.public.hex() == "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a"
    assert symcrypto.sign(kp, b"").hex() == (
        "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46b"
        "d25bf5f0595bbe24655141438e7a100b")
