"""Content-addressed storage for scanned prescription documents.

Blobs live as flat files named by the 64-char hex digest of their bytes (no
extension), with a sidecar JSON index of metadata. Writes land in a temp
file and are renamed into place, so a concurrent reader never observes a
partial blob. Only the digests are consensus-committed (via PutBlobRef
transactions); the bytes themselves replicate lazily, and a node that never
received a blob simply reports NotFound.

Reads are allowed to DOCTOR and above, or to the patient whose own record
or prescriptions reference the digest.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

from .acl import ElevationLevel, Permission, authorize
from .codec import Digest, digest
from .errors import (
    CorruptBlob,
    NotFound,
    PermissionDenied,
    TooLarge,
    UnsupportedMediaType,
)

if TYPE_CHECKING:
    from .ledger import LedgerState
    from .records import LoginRecord

MEDIA_TYPES = frozenset({"pdf", "png", "jpg"})
MAX_BLOB_SIZE = 16 * 1024 * 1024  # bytes; configurable at node start

_INDEX_NAME = "index.json"


@dataclass(frozen=True)
class BlobEntry:
    content_hash: Digest
    size: int
    media_type: str
    stored_at: int  # millis


class BlobStore:
    def __init__(self, root: str | Path, max_size: int = MAX_BLOB_SIZE):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.max_size = max_size
        self._index: dict[str, BlobEntry] = {}
        self._load_index()

    def _index_path(self) -> Path:
        return self.root / _INDEX_NAME

    def _load_index(self) -> None:
        path = self._index_path()
        if not path.exists():
            return
        for item in json.loads(path.read_text()):
            entry = BlobEntry(
                content_hash=Digest.from_hex(item["hash"]),
                size=item["size"],
                media_type=item["mediaType"],
                stored_at=item["storedAt"],
            )
            self._index[entry.content_hash.hex] = entry

    def _save_index(self) -> None:
        items = [
            {
                "hash": entry.content_hash.hex,
                "size": entry.size,
                "mediaType": entry.media_type,
                "storedAt": entry.stored_at,
            }
            for entry in sorted(self._index.values(), key=lambda e: e.content_hash.hex)
        ]
        tmp = tempfile.NamedTemporaryFile(
            "w", dir=self.root, prefix=".index-", suffix=".tmp", delete=False
        )
        try:
            json.dump(items, tmp)
            tmp.flush()
            os.fsync(tmp.fileno())
        finally:
            tmp.close()
        os.replace(tmp.name, self._index_path())

    def put(self, caller: "LoginRecord", data: bytes, media_type: str) -> Digest:
        """Store bytes under their digest; idempotent for identical bytes."""
        if not authorize(caller, Permission.PUT_BLOB):
            raise PermissionDenied("storing blobs requires DOCTOR or above")
        if not data:
            raise TooLarge("blob must be non-empty")
        if len(data) > self.max_size:
            raise TooLarge(f"{len(data)} bytes exceeds the {self.max_size}-byte cap")
        if media_type not in MEDIA_TYPES:
            raise UnsupportedMediaType(media_type)

        content_hash = digest(data)
        if content_hash.hex in self._index:
            return content_hash

        tmp = tempfile.NamedTemporaryFile(dir=self.root, prefix=".blob-", delete=False)
        try:
            tmp.write(data)
            tmp.flush()
            os.fsync(tmp.fileno())
        finally:
            tmp.close()
        os.replace(tmp.name, self.root / content_hash.hex)

        self._index[content_hash.hex] = BlobEntry(
            content_hash=content_hash,
            size=len(data),
            media_type=media_type,
            stored_at=int(time.time() * 1000),
        )
        self._save_index()
        return content_hash

    def _may_read(self, caller: "LoginRecord", hash_hex: str, state: "LedgerState") -> bool:
        if caller.superset >= ElevationLevel.DOCTOR:
            return True
        # patients may fetch digests their own record or prescriptions reference
        versions = state.patients.get(caller.mob, ())
        if any(s.record.photo == hash_hex for s in versions):
            return True
        for _, visit_id in state.rx_by_phone.get(caller.mob, ()):
            if state.prescriptions[visit_id].record.attachment == hash_hex:
                return True
        return False

    def get(self, caller: "LoginRecord", content_hash: Digest, state: "LedgerState") -> tuple[bytes, str]:
        """Fetch stored bytes; the read-back digest is verified every time."""
        entry = self._index.get(content_hash.hex)
        if entry is None:
            raise NotFound(content_hash.hex)
        if not self._may_read(caller, content_hash.hex, state):
            raise PermissionDenied("blob is not readable at this elevation")
        path = self.root / content_hash.hex
        if not path.exists():
            raise NotFound(content_hash.hex)
        data = path.read_bytes()
        if digest(data) != content_hash:
            raise CorruptBlob(content_hash.hex)
        return data, entry.media_type

    def entries(self) -> list[BlobEntry]:
        return [self._index[key] for key in sorted(self._index)]

    def __len__(self) -> int:
        return len(self._index)

    def audit(self) -> list[str]:
        """Full-store integrity check; returns hex digests that fail."""
        bad: list[str] = []
        for hash_hex in sorted(self._index):
            path = self.root / hash_hex
            if not path.exists() or digest(path.read_bytes()).hex != hash_hex:
                bad.append(hash_hex)
        return bad
