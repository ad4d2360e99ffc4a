from __future__ import annotations

import hashlib
import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diploma import crypto, merkle
from diploma.crypto import keygen, sign, verify
from diploma.encoding import canonical_decode, canonical_encode
from diploma.epochs import TetheringPoint
from diploma.errors import EncodingError, InvalidSeed
from diploma.model import Action, UpdateRecord


def test_sha256_empty_vector():
    assert crypto.hash(b"").hex() == (
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )


def test_sha256_abc_vector():
    assert crypto.hash(b"abc").hex() == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )


def test_no_collisions_over_10k_distinct_inputs():
    digests = {crypto.hash(i.to_bytes(4, "big")) for i in range(10_000)}
    assert len(digests) == 10_000


def test_keygen_deterministic_and_distinct():
    seeds = [hashlib.sha256(i.to_bytes(4, "big")).digest() for i in range(1000)]
    pubs = [keygen(s).public for s in seeds]
    assert len(set(pubs)) == 1000
    assert keygen(seeds[7]).public == pubs[7]


@pytest.mark.parametrize("n", [0, 16, 31, 33, 64])
def test_keygen_rejects_wrong_seed_length(n):
    with pytest.raises(InvalidSeed):
        keygen(b"\x01" * n)


def test_rfc8032_test_vector_1():
    kp = keygen(bytes.fromhex("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60"))
    assert kp.public.hex() == "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a"
    assert sign(kp.secret, b"").hex() == (
        "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e06522490155"
        "5fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"
    )


def test_sign_verify_and_every_bit_flip_fails():
    kp = keygen(bytes(range(32)))
    msg = b"registration"
    sig = sign(kp.secret, msg)
    assert verify(kp.public, msg, sig)
    for i in range(len(sig) * 8):
        bad = bytearray(sig)
        bad[i // 8] ^= 1 << (i % 8)
        assert not verify(kp.public, msg, bytes(bad))
    for i in range(len(msg) * 8):
        bad = bytearray(msg)
        bad[i // 8] ^= 1 << (i % 8)
        assert not verify(kp.public, bytes(bad), sig)


def test_verify_rejects_malformed_inputs():
    kp = keygen(bytes(32))
    sig = sign(kp.secret, b"m")
    assert not verify(b"short", b"m", sig)
    assert not verify(kp.public, b"m", sig[:-1])
    assert not verify(keygen(b"\x01" * 32).public, b"m", sig)


def test_key_ref_is_hash_of_encoded_public_key():
    kp = keygen(b"\x05" * 32)
    assert kp.ref == crypto.hash(canonical_encode(kp.public))
    assert kp.ref == crypto.key_ref(kp.public)


def test_secret_never_in_repr_or_encoding():
    kp = keygen(b"\x09" * 32)
    assert kp.secret.hex() not in repr(kp)
    with pytest.raises(EncodingError):
        canonical_encode(kp)


# -- canonical encoding ------------------------------------------------------


def test_canonical_encoding_vectors():
    assert canonical_encode({}) == b"{}"
    assert canonical_encode({"b": 1, "a": 2}) == b'{"a":2,"b":1}'
    assert canonical_encode(b"\xab\x01") == b'"ab01"'
    assert canonical_encode([1, "x", True]) == b'[1,"x",true]'
    assert canonical_encode({"a": None, "b": 0}) == b'{"b":0}'
    assert canonical_encode(Action.REVOKE) == b'"Revoke"'


def test_floats_are_rejected():
    with pytest.raises(EncodingError):
        canonical_encode({"x": 1.5})


def test_tethering_point_vector():
    tp = TetheringPoint("n0", 3, bytes(32))
    assert canonical_encode(tp) == (
        b'{"chain_hash":"' + b"00" * 32 + b'","epoch_index":3,"provider_id":"n0"}'
    )


@pytest.mark.parametrize(
    "data",
    [
        b'{"epoch_index":3,"provider_id":"n0","chain_hash":"' + b"00" * 32 + b'"}',  # unsorted
        b'{"chain_hash":"' + b"AA" * 32 + b'","epoch_index":3,"provider_id":"n0"}',  # upper hex
        b'{"chain_hash":"' + b"00" * 32 + b'", "epoch_index":3,"provider_id":"n0"}',  # whitespace
        b'{"chain_hash":"' + b"00" * 32 + b'","epoch_index":3}',  # missing field
        b'{"chain_hash":"' + b"00" * 32 + b'","epoch_index":3,"provider_id":"n0","x":1}',
        b'{"chain_hash":"' + b"00" * 32 + b'","epoch_index":"3","provider_id":"n0"}',
        b'{"chain_hash":"' + b"00" * 32 + b'","epoch_index":3,"provider_id":"n0"',  # truncated
    ],
)
def test_strict_decode_rejects_non_canonical(data):
    with pytest.raises(EncodingError):
        canonical_decode(data, TetheringPoint)


digests = st.binary(min_size=32, max_size=32)
texts = st.text(max_size=40)

updates = st.builds(
    UpdateRecord,
    prev_record_hash=digests,
    action=st.sampled_from(list(Action)),
    note=texts,
    next_update_key=digests,
    signer_public_key=digests,
    signature=st.binary(min_size=64, max_size=64),
    new_provider=st.one_of(
        st.none(),
        st.builds(TetheringPoint, texts, st.integers(0, 2**40), digests),
    ),
)


@settings(max_examples=1000, deadline=None)
@given(updates)
def test_round_trip_update_records(rec):
    data = canonical_encode(rec)
    assert canonical_decode(data, UpdateRecord) == rec
    assert canonical_encode(canonical_decode(data, UpdateRecord)) == data


@settings(max_examples=200, deadline=None)
@given(st.dictionaries(texts, st.one_of(st.integers(), texts, st.booleans())))
def test_encoding_is_key_order_independent(d):
    items = list(d.items())
    assert canonical_encode(dict(items)) == canonical_encode(dict(reversed(items)))


def test_random_bytes_round_trip():
    for _ in range(50):
        b = os.urandom(40)
        assert canonical_decode(canonical_encode(b), bytes) == b


def test_documented_vectors():
    """The vectors printed in the README."""
    kp0 = keygen(bytes(32))
    assert kp0.public.hex() == "3b6a27bcceb6a42d62a3a8d02a6f0d73653215771de243a63ac048a18b59da29"
    assert kp0.ref.hex() == "4a454dd145cfe7d65ce0620f099157d371099c7b63374b244c22bb32dd4dd213"
    assert merkle.EMPTY_ROOT.hex() == "98ce42deef51d40269d542f5314bef2c7468d401ad5d85168bfab4c0108f75f7"
    assert merkle.leaf_hash(bytes(32), b"\x11" * 32).hex() == (
        "8e724b356ecbd683d218e82e1a5c03ccbff6bd2949257bcc7a8e35297d18e992"
    )
    assert canonical_encode({"s": "é ok", "n": None}) == '{"s":"é ok"}'.encode()
    assert canonical_encode({}) == b"{}"
    assert canonical_encode({"b": 1, "a": 2}) == b'{"a":2,"b":1}'
    assert canonical_encode(b"\xab\x01") == b'"ab01"'
    assert canonical_encode(TetheringPoint("n0", 3, bytes(32))) == (
        b'{"chain_hash":"' + b"0" * 64 + b'","epoch_index":3,"provider_id":"n0"}'
    )
