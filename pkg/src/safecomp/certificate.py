"""Certificate chains, fingerprints, projections and verification proofs."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Any, Optional, Sequence

from .errors import EmptyChain, LengthMismatchBeyondDivergence, MalformedFile, UndefinedId
from .hashing import (
    DEFAULT_P,
    DIGEST_SIZE,
    Digest,
    combine,
    encode,
    hash_H,
    project,
    project_chain,
    register_record,
)

CHAIN_MAGIC = b"SCC1"
PROJECTION_MAGIC = b"SCP1"

# linear tail length for first_divergence
_LINEAR_TAIL = 8


@dataclass(frozen=True)
class CertChain:
    c0: Digest
    entries: tuple[Digest, ...] = ()

    @property
    def n(self) -> int:
        return len(self.entries)

    def at(self, i: int) -> Digest:
        """c_i for 0 <= i <= n."""
        if i == 0:
            return self.c0
        if not 1 <= i <= self.n:
            raise IndexError(f"chain index {i} outside 0..{self.n}")
        return self.entries[i - 1]

    @property
    def last(self) -> Digest:
        return self.entries[-1] if self.entries else self.c0

    def size_bytes(self) -> int:
        """Serialized size of the certificate entries: (q/8) * n."""
        return DIGEST_SIZE * self.n


@register_record("safecomp.CertProjection")
@dataclass(frozen=True)
class CertProjection:
    items: tuple[int, ...]
    p: int = DEFAULT_P

    @property
    def n(self) -> int:
        return len(self.items)

    def __len__(self):
        return len(self.items)

    def at(self, i: int) -> int:
        """cp[i] for 1 <= i <= n."""
        if not 1 <= i <= self.n:
            raise IndexError(f"projection index {i} outside 1..{self.n}")
        return self.items[i - 1]


@register_record("safecomp.VerificationProof")
@dataclass(frozen=True)
class VerificationProof:
    id: int
    prf: Digest


def chain_init(d: Any) -> Digest:
    return hash_H(encode(d))


def chain_extend(x: Any, c_prev: Digest) -> Digest:
    return hash_H(combine(encode(x), c_prev))


def fingerprint(chain: CertChain) -> tuple[Digest, Digest]:
    """Return ``(s, hc)`` with ``s = H(entries)`` and ``hc = H(s)``."""
    if chain.n == 0:
        raise EmptyChain("cannot fingerprint a chain with no entries")
    s = hash_H(encode(tuple(chain.entries)))
    return s, hash_H(encode(s))


def make_projection(chain: CertChain, p: int = DEFAULT_P) -> CertProjection:
    return CertProjection(tuple(project_chain(chain.entries, p)), p)


def certificate_size(n: int, q: int = 256) -> int:
    return (q // 8) * n


def first_divergence(mine: CertProjection, published: CertProjection) -> Optional[int]:
    """Smallest 1-based index where the projections differ, or None.

    Binary search narrows the window assuming equality is prefix-closed; the
    last few positions are then scanned linearly so that a single interior
    projection collision near the boundary does not shift the answer. When
    no probe finds a difference the whole common prefix is checked before
    reporting equality.
    Raises LengthMismatchBeyondDivergence when the shorter projection is a
    prefix of the longer one.
    """
    m = min(mine.n, published.n)
    a, b = mine.items, published.items
    lo, hi = 0, m + 1  # lo: assumed-equal index, hi: differing index or sentinel
    while hi - lo > _LINEAR_TAIL:
        mid = (lo + hi) // 2
        if a[mid - 1] == b[mid - 1]:
            lo = mid
        else:
            hi = mid
    for i in range(lo + 1, min(hi, m) + 1):
        if a[i - 1] != b[i - 1]:
            return i
    # every probe agreed; a forged projection can still differ at an isolated
    # interior position, so "equal" is only reported after a full scan
    j = linear_divergence(a[:m], b[:m])
    if j is not None:
        return j
    if mine.n != published.n:
        raise LengthMismatchBeyondDivergence(mine.n, published.n)
    return None


def linear_divergence(mine: Sequence[int], published: Sequence[int]) -> Optional[int]:
    """Reference scan: first 1-based index where the sequences differ."""
    for i, (x, y) in enumerate(zip(mine, published), start=1):
        if x != y:
            return i
    return None


def make_verification_proof(s: Digest, id: int) -> VerificationProof:
    if id == 0:
        raise UndefinedId("participant id 0 is reserved")
    return VerificationProof(id, hash_H(combine(encode(id), s)))


def check_verification_proof(s: Digest, proof: VerificationProof) -> bool:
    return proof.prf == hash_H(combine(encode(proof.id), s))


# -- file formats ---------------------------------------------------------

def dump_chain(chain: CertChain) -> bytes:
    return CHAIN_MAGIC + struct.pack(">I", chain.n) + chain.c0 + b"".join(chain.entries)


def load_chain(data: bytes) -> CertChain:
    if data[:4] != CHAIN_MAGIC:
        raise MalformedFile("missing SCC1 magic")
    if len(data) < 8 + DIGEST_SIZE:
        raise MalformedFile("truncated SCC1 header")
    (n,) = struct.unpack_from(">I", data, 4)
    body = data[8:]
    if len(body) != DIGEST_SIZE * (n + 1):
        raise MalformedFile(f"SCC1 body holds {len(body)} bytes, expected {DIGEST_SIZE * (n + 1)}")
    digests = [body[k:k + DIGEST_SIZE] for k in range(0, len(body), DIGEST_SIZE)]
    return CertChain(digests[0], tuple(digests[1:]))


def projection_item_size(p: int) -> int:
    return (p + 7) // 8


def dump_projection(cp: CertProjection) -> bytes:
    w = projection_item_size(cp.p)
    return (PROJECTION_MAGIC + struct.pack(">HI", cp.p, cp.n)
            + b"".join(x.to_bytes(w, "big") for x in cp.items))


def projection_header(data: bytes) -> tuple[int, int]:
    """Validate an SCP1 blob and return ``(p, n)``."""
    if data[:4] != PROJECTION_MAGIC:
        raise MalformedFile("missing SCP1 magic")
    if len(data) < 10:
        raise MalformedFile("truncated SCP1 header")
    p, n = struct.unpack_from(">HI", data, 4)
    if not 8 <= p <= 256:
        raise MalformedFile(f"SCP1 projection width {p} out of range")
    if len(data) != 10 + n * projection_item_size(p):
        raise MalformedFile("SCP1 length does not match its header")
    return p, n


def projection_entry(data: bytes, i: int) -> int:
    """Read cp[i] directly from an SCP1 blob without parsing the rest."""
    p, n = projection_header(data)
    if not 1 <= i <= n:
        raise IndexError(f"projection index {i} outside 1..{n}")
    w = projection_item_size(p)
    off = 10 + (i - 1) * w
    return int.from_bytes(data[off:off + w], "big")


def load_projection(data: bytes) -> CertProjection:
    p, n = projection_header(data)
    w = projection_item_size(p)
    items = tuple(int.from_bytes(data[10 + k * w:10 + (k + 1) * w], "big") for k in range(n))
    if any(x >> p for x in items):
        raise MalformedFile("SCP1 item exceeds the declared width")
    return CertProjection(items, p)
