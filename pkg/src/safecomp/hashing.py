"""Canonical encoding, the hash H, the combiner and the projection family.

Every byte layout here is normative: chains, fingerprints and the arbiter's
checks all depend on ``encode`` producing identical bytes for equal values.

Encoding is tag-length-value with a one-byte tag and a 4-byte big-endian
length::

    0x00 None        empty payload
    0x01 natural     minimal big-endian magnitude (0 -> b"\\x00")
    0x02 negative    minimal big-endian magnitude of -v
    0x03 bytes       raw
    0x04 str         UTF-8
    0x05 tuple       concatenated item encodings
    0x06 list        concatenated item encodings
    0x07 dict        key/value encodings, pairs sorted by encoded key
    0x08 bool        b"\\x00" or b"\\x01"
    0x10 record      encode(name) + encode(tuple(fields)) for registered types
"""
from __future__ import annotations

import dataclasses
import hashlib
import struct
from dataclasses import dataclass
from typing import Any, Iterable

from .errors import DecodeError, UnencodableValue

Digest = bytes

DIGEST_BITS = 256
DIGEST_SIZE = DIGEST_BITS // 8
DEFAULT_P = 16

_NONE, _NAT, _NEG, _BYTES, _STR, _TUPLE, _LIST, _DICT, _BOOL = range(9)
_RECORD = 0x10

_LEN = struct.Struct(">I")

_records_by_name: dict[str, type] = {}
_names_by_type: dict[type, str] = {}


@dataclass(frozen=True)
class HashParams:
    q: int = DIGEST_BITS
    p: int = DEFAULT_P

    def __post_init__(self):
        if self.q != DIGEST_BITS:
            raise ValueError(f"only q={DIGEST_BITS} (SHA-256) is supported, got {self.q}")
        if not 8 <= self.p <= self.q:
            raise ValueError(f"projection width must satisfy 8 <= p <= q, got p={self.p}")

    @property
    def digest_size(self) -> int:
        return self.q // 8


def register_record(name: str):
    """Class decorator making a dataclass encodable under a stable name.

    Fields are encoded positionally, so field order is part of the format.
    """

    def wrap(cls):
        if not dataclasses.is_dataclass(cls):
            raise TypeError(f"{cls.__name__} must be a dataclass")
        if name in _records_by_name and _records_by_name[name] is not cls:
            raise ValueError(f"record name {name!r} already registered")
        _records_by_name[name] = cls
        _names_by_type[cls] = name
        return cls

    return wrap


def _tlv(tag: int, payload: bytes) -> bytes:
    return bytes([tag]) + _LEN.pack(len(payload)) + payload


def _magnitude(n: int) -> bytes:
    return n.to_bytes(max(1, (n.bit_length() + 7) // 8), "big")


def encode(v: Any) -> bytes:
    """Canonical injective byte encoding of a protocol value."""
    if v is None:
        return _tlv(_NONE, b"")
    if isinstance(v, bool):
        return _tlv(_BOOL, b"\x01" if v else b"\x00")
    if isinstance(v, int):
        return _tlv(_NAT, _magnitude(v)) if v >= 0 else _tlv(_NEG, _magnitude(-v))
    if isinstance(v, (bytes, bytearray)):
        return _tlv(_BYTES, bytes(v))
    if isinstance(v, str):
        return _tlv(_STR, v.encode("utf-8"))
    if isinstance(v, tuple) and type(v) is tuple:
        return _tlv(_TUPLE, b"".join(encode(x) for x in v))
    if isinstance(v, list):
        return _tlv(_LIST, b"".join(encode(x) for x in v))
    if isinstance(v, dict):
        pairs = sorted((encode(k), encode(x)) for k, x in v.items())
        return _tlv(_DICT, b"".join(k + x for k, x in pairs))
    name = _names_by_type.get(type(v))
    if name is not None:
        fields = tuple(getattr(v, f.name) for f in dataclasses.fields(v))
        return _tlv(_RECORD, encode(name) + encode(fields))
    raise UnencodableValue(f"cannot encode value of type {type(v).__name__}")


def _read(buf: bytes, pos: int, limit: int) -> tuple[Any, int]:
    if pos + 5 > limit:
        raise DecodeError(f"truncated header at offset {pos}")
    tag = buf[pos]
    (length,) = _LEN.unpack_from(buf, pos + 1)
    start, end = pos + 5, pos + 5 + length
    if end > limit:
        raise DecodeError(f"truncated payload at offset {pos}")

    if tag == _NONE:
        if length:
            raise DecodeError("None with non-empty payload")
        return None, end
    if tag == _BOOL:
        payload = buf[start:end]
        if payload not in (b"\x00", b"\x01"):
            raise DecodeError("bad bool payload")
        return payload == b"\x01", end
    if tag in (_NAT, _NEG):
        if length == 0 or (length > 1 and buf[start] == 0):
            raise DecodeError("non-minimal integer encoding")
        n = int.from_bytes(buf[start:end], "big")
        if tag == _NEG:
            if n == 0:
                raise DecodeError("negative zero")
            n = -n
        return n, end
    if tag == _BYTES:
        return bytes(buf[start:end]), end
    if tag == _STR:
        try:
            return buf[start:end].decode("utf-8"), end
        except UnicodeDecodeError as exc:
            raise DecodeError(str(exc)) from exc
    if tag in (_TUPLE, _LIST):
        items, p = [], start
        while p < end:
            item, p = _read(buf, p, end)
            items.append(item)
        return (tuple(items) if tag == _TUPLE else items), end
    if tag == _DICT:
        out, p, last = {}, start, None
        while p < end:
            k_start = p
            key, p = _read(buf, p, end)
            raw_key = buf[k_start:p]
            if last is not None and raw_key <= last:
                raise DecodeError("dict keys not in canonical order")
            last = raw_key
            out[key], p = _read(buf, p, end)
        return out, end
    if tag == _RECORD:
        name, p = _read(buf, start, end)
        fields, p = _read(buf, p, end)
        if p != end or not isinstance(name, str) or not isinstance(fields, tuple):
            raise DecodeError("malformed record")
        cls = _records_by_name.get(name)
        if cls is None:
            raise DecodeError(f"unknown record type {name!r}")
        try:
            return cls(*fields), end
        except (TypeError, ValueError) as exc:
            raise DecodeError(f"bad fields for record {name!r}: {exc}") from exc
    raise DecodeError(f"unknown tag 0x{tag:02x} at offset {pos}")


def decode(b: bytes) -> Any:
    b = bytes(b)
    value, end = _read(b, 0, len(b))
    if end != len(b):
        raise DecodeError(f"{len(b) - end} trailing bytes")
    return value


def decode_stream(b: bytes) -> list:
    """Decode a concatenation of encodings."""
    b = bytes(b)
    out, pos = [], 0
    while pos < len(b):
        value, pos = _read(b, pos, len(b))
        out.append(value)
    return out


def hash_H(b: bytes) -> Digest:
    return hashlib.sha256(b).digest()


def combine(a: bytes, b: Digest) -> bytes:
    # length prefixes make the pair recoverable, hence injective
    return _LEN.pack(len(a)) + a + _LEN.pack(len(b)) + b


def project(c: Digest, p: int = DEFAULT_P) -> int:
    """The leading ``p`` bits of ``c`` as a big-endian integer."""
    nbytes = (p + 7) // 8
    if len(c) < nbytes:
        raise ValueError(f"digest of {len(c)} bytes is shorter than p={p} bits")
    return int.from_bytes(c[:nbytes], "big") >> (8 * nbytes - p)


def project_chain(cs: Iterable[Digest], p: int = DEFAULT_P) -> list[int]:
    return [project(c, p) for c in cs]


def hex_digest(c: Digest) -> str:
    return c.hex()


def encoded_size(v: Any) -> int:
    return len(encode(v))


__all__ = [
    "DEFAULT_P",
    "DIGEST_BITS",
    "DIGEST_SIZE",
    "Digest",
    "HashParams",
    "combine",
    "decode",
    "decode_stream",
    "encode",
    "encoded_size",
    "hash_H",
    "hex_digest",
    "project",
    "project_chain",
    "register_record",
]
