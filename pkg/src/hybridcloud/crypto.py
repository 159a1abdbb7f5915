"""Per-value encryption of sensitive attributes into etuples.

An etuple is ``<ciphertext, partition id>``. Values are serialised to a
canonical byte form, encrypted with AES in counter mode under a fresh 96-bit
nonce, and sealed with a truncated HMAC-SHA256 tag so corrupted input fails
loudly instead of decrypting to a wrong value.

Canonical plaintext (first byte is a type tag)::

    integer  b"i" + 8-byte signed big-endian
    decimal  b"d" + IEEE-754 binary64 big-endian
    date     b"t" + 4-byte signed big-endian days since 1970-01-01
    text     b"s" + UTF-8
"""

from __future__ import annotations

import hashlib
import hmac
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .bucketize import BucketScheme, format_id, map_value
from .errors import DecryptionError, KeyLengthError

NONCE_BYTES = 12
TAG_BYTES = 16
KEY_ENV = "HYBRIDCLOUD_KEY_FILE"


@dataclass(frozen=True)
class ETuple:
    ciphertext: bytes  # AES-CTR output followed by the tag
    nonce: bytes
    partition_id: int

    def encode(self) -> str:
        """On-disk field form ``hex(nonce):hex(ciphertext)``."""
        return f"{self.nonce.hex()}:{self.ciphertext.hex()}"

    @classmethod
    def decode(cls, field: str, partition_id: int = 0) -> "ETuple":
        try:
            nonce_hex, ct_hex = field.split(":")
            return cls(bytes.fromhex(ct_hex), bytes.fromhex(nonce_hex), partition_id)
        except ValueError as exc:
            raise DecryptionError(f"malformed etuple field {field[:40]!r}") from exc


class SecretKey:
    """Data-encryption key plus the MAC and ident keys derived from it."""

    def __init__(self, raw: bytes):
        if len(raw) not in (16, 32):
            raise KeyLengthError(f"AES key must be 16 or 32 bytes, got {len(raw)}")
        self.raw = bytes(raw)
        self._aes = algorithms.AES(self.raw)
        self.mac_key = hashlib.sha256(b"hybridcloud-mac\x00" + self.raw).digest()
        self.ident_key = hashlib.sha256(b"hybridcloud-ident\x00" + self.raw).digest()

    @classmethod
    def generate(cls, nbytes: int = 32) -> "SecretKey":
        return cls(os.urandom(nbytes))

    @classmethod
    def load(cls, path: str | Path | None = None) -> "SecretKey":
        path = path or os.environ.get(KEY_ENV)
        if not path:
            raise KeyLengthError(f"no key file given (use --key-file or ${KEY_ENV})")
        try:
            return cls(bytes.fromhex(Path(path).read_text().strip()))
        except ValueError as exc:
            raise KeyLengthError(f"{path}: key file is not hex") from exc

    def save(self, path: str | Path) -> None:
        p = Path(path)
        p.write_text(self.raw.hex() + "\n")
        p.chmod(0o600)

    def _ctr(self, nonce: bytes):
        return Cipher(self._aes, modes.CTR(nonce + b"\x00\x00\x00\x00"))

    def _tag(self, nonce: bytes, body: bytes) -> bytes:
        return hmac.digest(self.mac_key, nonce + body, "sha256")[:TAG_BYTES]

    def seal(self, plaintext: bytes) -> tuple[bytes, bytes]:
        nonce = os.urandom(NONCE_BYTES)
        enc = self._ctr(nonce).encryptor()
        body = enc.update(plaintext) + enc.finalize()
        return nonce, body + self._tag(nonce, body)

    def open(self, nonce: bytes, ciphertext: bytes) -> bytes:
        if len(nonce) != NONCE_BYTES or len(ciphertext) < TAG_BYTES + 1:
            raise DecryptionError("truncated etuple")
        body, tag = ciphertext[:-TAG_BYTES], ciphertext[-TAG_BYTES:]
        if not hmac.compare_digest(tag, self._tag(nonce, body)):
            raise DecryptionError("etuple authentication failed")
        dec = self._ctr(nonce).decryptor()
        return dec.update(body) + dec.finalize()


def _as_key(key: SecretKey | bytes) -> SecretKey:
    return key if isinstance(key, SecretKey) else SecretKey(key)


def serialize_value(datatype: str, v: Any) -> bytes:
    if datatype == "integer":
        return b"i" + int(v).to_bytes(8, "big", signed=True)
    if datatype == "decimal":
        return b"d" + struct.pack(">d", float(v))
    if datatype == "date":
        return b"t" + int(v).to_bytes(4, "big", signed=True)
    if datatype == "text":
        return b"s" + str(v).encode("utf-8")
    raise ValueError(f"unknown datatype {datatype!r}")


def deserialize_value(data: bytes) -> Any:
    tag, body = data[:1], data[1:]
    try:
        if tag == b"i" and len(body) == 8:
            return int.from_bytes(body, "big", signed=True)
        if tag == b"d" and len(body) == 8:
            return struct.unpack(">d", body)[0]
        if tag == b"t" and len(body) == 4:
            return int.from_bytes(body, "big", signed=True)
        if tag == b"s":
            return body.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecryptionError("plaintext is not valid UTF-8") from exc
    raise DecryptionError(f"bad plaintext encoding (tag {tag!r}, {len(body)} bytes)")


def encrypt_value(key: SecretKey | bytes, scheme: BucketScheme, v: Any) -> ETuple:
    k = _as_key(key)
    nonce, ct = k.seal(serialize_value(scheme.datatype, v))
    return ETuple(ct, nonce, map_value(scheme, v))


def decrypt_value(key: SecretKey | bytes, e: ETuple) -> Any:
    return deserialize_value(_as_key(key).open(e.nonce, e.ciphertext))


def encrypted_width(plain_width: int) -> int:
    """Binary size of one etuple (nonce, type tag, payload, MAC tag).

    The CSV field is the hex form of the same bytes plus a separator.
    """
    return NONCE_BYTES + 1 + plain_width + TAG_BYTES


def encrypt_column(key: SecretKey, scheme: BucketScheme, values: Iterable[Any]
                   ) -> tuple[list[str], list[str]]:
    """Encode a column as (etuple fields, hex partition ids)."""
    fields, ids = [], []
    for v in values:
        e = encrypt_value(key, scheme, v)
        fields.append(e.encode())
        ids.append(format_id(e.partition_id))
    return fields, ids


def decrypt_column(key: SecretKey, fields: Iterable[str]) -> list:
    """Decrypt encoded etuple fields; each distinct field is opened once."""
    arr = np.asarray(list(fields), dtype=object)
    if len(arr) == 0:
        return []
    uniq, inverse = np.unique(arr, return_inverse=True)
    plain = [decrypt_value(key, ETuple.decode(f)) for f in uniq]
    return [plain[i] for i in inverse]
