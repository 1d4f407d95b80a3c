"""Canonical binary encoding and hashing of ledger documents.

Every transaction id, block hash, and state hash in medledger is derived
from the byte layout defined here, so the encoding must be bit-identical on
every node. Maps are emitted with keys sorted by UTF-8 byte order and every
value carries an explicit type tag, which makes decoding unambiguous and
gives equal value trees byte-equal encodings regardless of insertion order.

Wire layout, per value: one tag byte, a big-endian u32 length, then the
payload.

    0x01  map        length = entry count; entries are (key string, value)
                     pairs sorted ascending by key bytes
    0x02  list       length = item count
    0x03  string     length = UTF-8 byte count
    0x04  int64      length = 8; big-endian two's complement
    0x05  bool       length = 1; payload 0x00 or 0x01
    0x06  timestamp  length = 8; big-endian millis since Unix epoch, UTC
    0x07  bytes      length = raw byte count

Floats are deliberately unsupported: state hashes must agree bit-for-bit
across nodes. The project-wide hash is SHA-256 (32-byte digests).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Union

from .errors import DecodeError, DuplicateKey, IntOutOfRange, UnsupportedType

TAG_MAP = 0x01
TAG_LIST = 0x02
TAG_STRING = 0x03
TAG_INT64 = 0x04
TAG_BOOL = 0x05
TAG_TIMESTAMP = 0x06
TAG_BYTES = 0x07

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1

DIGEST_SIZE = 32
HASH_NAME = "sha256"


@dataclass(frozen=True, order=True)
class Timestamp:
    """Milliseconds since the Unix epoch, UTC. The only time type documents carry."""

    millis: int


@dataclass(frozen=True, order=True)
class Digest:
    """A 32-byte SHA-256 value, rendered as 64 lowercase hex characters."""

    value: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.value, bytes) or len(self.value) != DIGEST_SIZE:
            raise ValueError("digest must be exactly 32 bytes")

    @classmethod
    def from_hex(cls, text: str) -> "Digest":
        return cls(bytes.fromhex(text))

    @property
    def hex(self) -> str:
        return self.value.hex()

    def __str__(self) -> str:
        return self.hex


Value = Union[str, int, bool, Timestamp, bytes, dict, list]

ZERO_DIGEST = Digest(b"\x00" * DIGEST_SIZE)


def digest(data: bytes) -> Digest:
    """Hash bytes with the project-wide hash function."""
    return Digest(hashlib.sha256(data).digest())


def digest_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def encode_canonical(value: Value) -> bytes:
    """Encode a document value tree into its canonical bytes."""
    out = bytearray()
    _encode(value, out)
    return bytes(out)


def _encode(value: Value, out: bytearray) -> None:
    # bool must be tested before int: bool is an int subclass.
    if isinstance(value, bool):
        out += struct.pack(">BIB", TAG_BOOL, 1, 1 if value else 0)
    elif isinstance(value, int):
        if not INT64_MIN <= value <= INT64_MAX:
            raise IntOutOfRange(f"{value} does not fit in int64")
        out += struct.pack(">BIq", TAG_INT64, 8, value)
    elif isinstance(value, Timestamp):
        if not INT64_MIN <= value.millis <= INT64_MAX:
            raise IntOutOfRange(f"timestamp {value.millis} does not fit in int64")
        out += struct.pack(">BIq", TAG_TIMESTAMP, 8, value.millis)
    elif isinstance(value, str):
        data = value.encode("utf-8")
        out += struct.pack(">BI", TAG_STRING, len(data))
        out += data
    elif isinstance(value, bytes):
        out += struct.pack(">BI", TAG_BYTES, len(value))
        out += value
    elif isinstance(value, dict):
        items = []
        for key in value:
            if not isinstance(key, str):
                raise UnsupportedType(f"map key {key!r} is not a string")
            items.append((key.encode("utf-8"), value[key]))
        items.sort(key=lambda kv: kv[0])
        out += struct.pack(">BI", TAG_MAP, len(items))
        for key_bytes, child in items:
            out += struct.pack(">BI", TAG_STRING, len(key_bytes))
            out += key_bytes
            _encode(child, out)
    elif isinstance(value, (list, tuple)):
        out += struct.pack(">BI", TAG_LIST, len(value))
        for child in value:
            _encode(child, out)
    else:
        raise UnsupportedType(f"unsupported document value: {type(value).__name__}")


def decode_canonical(data: bytes) -> Value:
    """Decode canonical bytes back into a value tree.

    Rejects anything the encoder could not have produced: trailing bytes,
    out-of-order or duplicate map keys, invalid UTF-8, bad bool payloads.
    """
    value, offset = _decode(data, 0)
    if offset != len(data):
        raise DecodeError(f"{len(data) - offset} trailing bytes after document")
    return value


def _read_header(data: bytes, offset: int) -> tuple[int, int, int]:
    if offset + 5 > len(data):
        raise DecodeError("truncated value header")
    tag, length = struct.unpack_from(">BI", data, offset)
    return tag, length, offset + 5


def _decode(data: bytes, offset: int) -> tuple[Value, int]:
    tag, length, offset = _read_header(data, offset)
    if tag == TAG_MAP:
        result: dict[str, Value] = {}
        prev_key: bytes | None = None
        for _ in range(length):
            key_tag, key_len, offset = _read_header(data, offset)
            if key_tag != TAG_STRING:
                raise DecodeError("map key is not a string")
            key_bytes = data[offset : offset + key_len]
            if len(key_bytes) != key_len:
                raise DecodeError("truncated map key")
            offset += key_len
            if prev_key is not None:
                if key_bytes == prev_key:
                    raise DuplicateKey(key_bytes.decode("utf-8", "replace"))
                if key_bytes < prev_key:
                    raise DecodeError("map keys not in canonical order")
            prev_key = key_bytes
            try:
                key = key_bytes.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise DecodeError("map key is not valid UTF-8") from exc
            result[key], offset = _decode(data, offset)
        return result, offset
    if tag == TAG_LIST:
        items: list[Value] = []
        for _ in range(length):
            item, offset = _decode(data, offset)
            items.append(item)
        return items, offset
    if tag == TAG_STRING:
        raw = data[offset : offset + length]
        if len(raw) != length:
            raise DecodeError("truncated string payload")
        try:
            return raw.decode("utf-8"), offset + length
        except UnicodeDecodeError as exc:
            raise DecodeError("string is not valid UTF-8") from exc
    if tag == TAG_INT64:
        if length != 8:
            raise DecodeError("int64 payload must be 8 bytes")
        if offset + 8 > len(data):
            raise DecodeError("truncated int64 payload")
        return struct.unpack_from(">q", data, offset)[0], offset + 8
    if tag == TAG_BOOL:
        if length != 1:
            raise DecodeError("bool payload must be 1 byte")
        if offset + 1 > len(data):
            raise DecodeError("truncated bool payload")
        byte = data[offset]
        if byte not in (0, 1):
            raise DecodeError(f"bool payload byte {byte:#x} is not 0 or 1")
        return byte == 1, offset + 1
    if tag == TAG_TIMESTAMP:
        if length != 8:
            raise DecodeError("timestamp payload must be 8 bytes")
        if offset + 8 > len(data):
            raise DecodeError("truncated timestamp payload")
        return Timestamp(struct.unpack_from(">q", data, offset)[0]), offset + 8
    if tag == TAG_BYTES:
        raw = data[offset : offset + length]
        if len(raw) != length:
            raise DecodeError("truncated bytes payload")
        return raw, offset + length
    raise DecodeError(f"unknown type tag {tag:#x}")


# --- JSON bridge ---------------------------------------------------------
#
# The HTTP API and CLI exchange documents as JSON. Timestamps and byte
# strings have no native JSON form, so they ride in single-key wrapper
# objects; "$"-prefixed map keys are reserved for those wrappers.

TS_KEY = "$ts"
BYTES_KEY = "$bytes"


def to_jsonable(value: Value) -> object:
    """Render a document as JSON-compatible data."""
    if isinstance(value, bool) or isinstance(value, int) or isinstance(value, str):
        return value
    if isinstance(value, Timestamp):
        return {TS_KEY: value.millis}
    if isinstance(value, bytes):
        return {BYTES_KEY: value.hex()}
    if isinstance(value, dict):
        for key in value:
            if isinstance(key, str) and key.startswith("$"):
                raise UnsupportedType(f"map key {key!r} collides with JSON wrappers")
        return {key: to_jsonable(child) for key, child in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(child) for child in value]
    raise UnsupportedType(f"unsupported document value: {type(value).__name__}")


def from_jsonable(obj: object) -> Value:
    """Parse JSON-compatible data back into a document tree."""
    if isinstance(obj, bool) or isinstance(obj, str):
        return obj
    if isinstance(obj, int):
        if not INT64_MIN <= obj <= INT64_MAX:
            raise IntOutOfRange(f"{obj} does not fit in int64")
        return obj
    if isinstance(obj, float):
        raise UnsupportedType("floats are not supported in documents")
    if isinstance(obj, dict):
        if set(obj) == {TS_KEY}:
            millis = obj[TS_KEY]
            if isinstance(millis, bool) or not isinstance(millis, int):
                raise UnsupportedType(f"{TS_KEY} value must be an integer")
            return Timestamp(millis)
        if set(obj) == {BYTES_KEY}:
            text = obj[BYTES_KEY]
            if not isinstance(text, str):
                raise UnsupportedType(f"{BYTES_KEY} value must be a hex string")
            try:
                return bytes.fromhex(text)
            except ValueError as exc:
                raise UnsupportedType(f"{BYTES_KEY} value is not valid hex") from exc
        out: dict[str, Value] = {}
        for key, child in obj.items():
            if not isinstance(key, str):
                raise UnsupportedType(f"map key {key!r} is not a string")
            if key.startswith("$"):
                raise UnsupportedType(f"map key {key!r} collides with JSON wrappers")
            out[key] = from_jsonable(child)
        return out
    if isinstance(obj, list):
        return [from_jsonable(child) for child in obj]
    raise UnsupportedType(f"unsupported JSON value: {type(obj).__name__}")
