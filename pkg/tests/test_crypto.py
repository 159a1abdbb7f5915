from __future__ import annotations

import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridcloud.bucketize import build_scheme, map_value
from hybridcloud.catalog import AttributeMeta, ColumnStats, date_to_days
from hybridcloud.crypto import (
    ETuple,
    SecretKey,
    decrypt_column,
    decrypt_value,
    encrypt_column,
    encrypt_value,
    encrypted_width,
)
from hybridcloud.errors import DecryptionError, KeyLengthError

KEY = SecretKey(bytes(range(32)))


def scheme(dt_name="integer", lo=0, hi=10**6, n=31):
    return build_scheme(AttributeMeta("a", "r", dt_name, True), ColumnStats(10**6, lo, hi, 8), n, KEY.ident_key)


def test_decrypt_of_encrypt_42():
    assert decrypt_value(KEY, encrypt_value(KEY, scheme(), 42)) == 42


def test_fresh_nonces_give_distinct_ciphertexts_same_partition():
    s = scheme()
    a, b = encrypt_value(KEY, s, 777), encrypt_value(KEY, s, 777)
    assert a.ciphertext != b.ciphertext and a.nonce != b.nonce
    assert a.partition_id == b.partition_id == map_value(s, 777)


def test_building_goes_to_the_b_partition():
    s = build_scheme(AttributeMeta("c_mktsegment", "customer", "text", True),
                     ColumnStats(5, "AUTOMOBILE", "MACHINERY", 10), 36, KEY.ident_key)
    assert encrypt_value(KEY, s, "BUILDING").partition_id == s.ident_ids[1]


def test_corrupted_ciphertext_raises():
    e = encrypt_value(KEY, scheme(), 5)
    flipped = bytes([e.ciphertext[0] ^ 1]) + e.ciphertext[1:]
    with pytest.raises(DecryptionError):
        decrypt_value(KEY, ETuple(flipped, e.nonce, e.partition_id))
    with pytest.raises(DecryptionError):
        decrypt_value(KEY, ETuple(e.ciphertext[:5], e.nonce, 0))
    with pytest.raises(DecryptionError):
        ETuple.decode("not-an-etuple")


def test_wrong_key_is_detected():
    e = encrypt_value(KEY, scheme(), 5)
    with pytest.raises(DecryptionError):
        decrypt_value(SecretKey(b"\x01" * 32), e)


def test_key_lengths():
    SecretKey(b"a" * 16)
    with pytest.raises(KeyLengthError):
        SecretKey(b"a" * 20)


def test_key_file_round_trip(tmp_path, monkeypatch):
    path = tmp_path / "k.hex"
    k = SecretKey.generate()
    k.save(path)
    assert oct(path.stat().st_mode & 0o777) == "0o600"
    assert SecretKey.load(path).raw == k.raw
    monkeypatch.setenv("HYBRIDCLOUD_KEY_FILE", str(path))
    assert SecretKey.load().raw == k.raw
    path.write_text("zz")
    with pytest.raises(KeyLengthError):
        SecretKey.load(path)


def test_field_encoding_round_trip_and_width():
    e = encrypt_value(KEY, scheme(), 123456)
    back = ETuple.decode(e.encode(), e.partition_id)
    assert back == e
    # integer payload is 8 bytes: nonce + type tag + payload + MAC tag
    assert len(e.nonce) + len(e.ciphertext) == encrypted_width(8)


def test_column_round_trip_of_10k_generated_values(dataset):
    values = dataset.tables["lineitem"]["l_extendedprice"][:10_000]
    s = scheme("decimal", float(values.min()), float(values.max()), 34)
    fields, ids = encrypt_column(KEY, s, values.tolist())
    assert decrypt_column(KEY, fields) == values.tolist()
    assert len(set(fields)) == len(fields)


@settings(max_examples=300, deadline=None)
@given(st.one_of(
    st.tuples(st.just("integer"), st.integers(-2**63, 2**63 - 1)),
    st.tuples(st.just("decimal"), st.floats(allow_nan=False)),
    st.tuples(st.just("text"), st.text()),
    st.tuples(st.just("date"), st.dates(dt.date(1900, 1, 1), dt.date(2200, 1, 1)).map(date_to_days)),
))
def test_round_trip_any_value(pair):
    dt_name, v = pair
    s = scheme("text" if dt_name == "text" else dt_name, 0, 100, 4)
    assert decrypt_value(KEY, encrypt_value(KEY, s, v)) == v


def test_decrypt_column_handles_empty_and_repeats():
    s = scheme()
    fields, _ = encrypt_column(KEY, s, [1, 2])
    assert decrypt_column(KEY, []) == []
    assert decrypt_column(KEY, [fields[0], fields[1], fields[0]]) == [1, 2, 1]
    assert np.array_equal(np.array(decrypt_column(KEY, fields)), np.array([1, 2]))
