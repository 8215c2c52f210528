"""Mock content-addressed blob store and the trusted projection oracle.

Stands in for an external immutable store (IPFS-like) plus an oracle that
moves selected projection entries into the arbiter. Availability can be
switched off per blob or globally to simulate outages.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .certificate import projection_entry, projection_header
from .errors import MalformedFile, MalformedProjection, Unavailable
from .hashing import Digest, hash_H, register_record


@register_record("safecomp.BlobRef")
@dataclass(frozen=True)
class BlobRef:
    digest: Digest

    def __str__(self):
        return self.digest.hex()


class BlobStore:
    def __init__(self, root: Optional[Path] = None):
        self._blobs: dict[Digest, bytes] = {}
        self._offline: set[Digest] = set()
        self._outage = False
        self._lock = threading.Lock()
        self.root = Path(root) if root is not None else None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            for path in self.root.iterdir():
                if path.is_file() and len(path.name) == 64:
                    data = path.read_bytes()
                    if hash_H(data).hex() == path.name:
                        self._blobs[hash_H(data)] = data

    def put(self, blob: bytes) -> BlobRef:
        blob = bytes(blob)
        ref = BlobRef(hash_H(blob))
        with self._lock:
            if ref.digest not in self._blobs:
                self._blobs[ref.digest] = blob
                if self.root is not None:
                    (self.root / ref.digest.hex()).write_bytes(blob)
        return ref

    def get(self, ref: BlobRef) -> bytes:
        if self._outage or ref.digest in self._offline:
            raise Unavailable(f"blob {ref} is offline")
        try:
            data = self._blobs[ref.digest]
        except KeyError:
            raise Unavailable(f"blob {ref} was never stored") from None
        if hash_H(data) != ref.digest:  # pragma: no cover - store never mutates blobs
            raise Unavailable(f"blob {ref} failed its digest check")
        return data

    def __contains__(self, ref: BlobRef) -> bool:
        return ref.digest in self._blobs

    def set_available(self, ref: BlobRef, available: bool) -> None:
        with self._lock:
            if available:
                self._offline.discard(ref.digest)
            else:
                self._offline.add(ref.digest)

    def set_outage(self, down: bool) -> None:
        """Take every blob offline (or bring them back)."""
        self._outage = down


def oracle_fetch_projection(store: BlobStore, ref: BlobRef, indices: Iterable[int]) -> dict[int, int]:
    """Return ``{i: cp[i]}`` for the requested 1-based positions of an SCP1 blob."""
    data = store.get(ref)
    try:
        _, n = projection_header(data)
    except MalformedFile as exc:
        raise MalformedProjection(str(exc)) from exc
    out = {}
    for i in sorted(set(indices)):
        if not 1 <= i <= n:
            raise MalformedProjection(f"index {i} outside 1..{n}")
        out[i] = projection_entry(data, i)
    return out
