"""Mutable keyed store for encrypted records and their anchor metadata.

This is the deletable half of every anchored pair: the ledger keeps only
digests, so erasing a record here satisfies deletion requests without
touching chain history. Records are kept as canonical bytes so the file
and in-memory backends behave identically, and so integrity experiments
can flip stored bytes directly.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .canonical import CanonicalParseError, canonical_deserialize, canonical_serialize
from .crypto import Digest, EncryptedPayload, KeyVault, sha256
from .ledger import OnChainAnchor

__all__ = [
    "NAMESPACES",
    "StoreKey",
    "OffChainRecord",
    "OffchainStore",
    "FileStore",
    "HashMismatchError",
    "CorruptRecordError",
    "explanation_record_id",
]

NAMESPACES = (
    "explanations",
    "training_data",
    "model_configs",
    "expert_contributions",
    "identities",
)


class HashMismatchError(ValueError):
    """Declared digest does not match the record's decrypted payload."""


class CorruptRecordError(ValueError):
    """Stored bytes no longer parse as a canonical record."""


@dataclass(frozen=True)
class StoreKey:
    namespace: str
    id: str

    def __post_init__(self) -> None:
        if self.namespace not in NAMESPACES:
            raise ValueError(f"unknown namespace: {self.namespace}")
        if not self.id or "/" in self.id or "\x00" in self.id or self.id in (".", ".."):
            raise ValueError(f"invalid record id: {self.id!r}")


def explanation_record_id(customer_id: str, timestamp_ms: int) -> str:
    return f"{customer_id}_{timestamp_ms}"


@dataclass
class OffChainRecord:
    """Anchor metadata plus the encrypted payload it was computed from."""

    customer_id: str
    timestamp_ms: int
    explanation_hash: Digest
    payload: EncryptedPayload

    def to_dict(self) -> dict[str, Any]:
        return {
            "customer_id": self.customer_id,
            "timestamp_ms": self.timestamp_ms,
            "explanation_hash": self.explanation_hash.hex,
            "payload": self.payload.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "OffChainRecord":
        return cls(
            customer_id=d["customer_id"],
            timestamp_ms=d["timestamp_ms"],
            explanation_hash=Digest.from_hex(d["explanation_hash"]),
            payload=EncryptedPayload.from_dict(d["payload"]),
        )


class OffchainStore:
    """In-memory backend; writes verify the declared digest by decryption."""

    def __init__(self, vault: KeyVault):
        self.vault = vault
        self._lock = threading.Lock()

    # -- byte-level backend ---------------------------------------------------

    def _read_bytes(self, key: StoreKey) -> bytes | None:
        raise NotImplementedError

    def _write_bytes(self, key: StoreKey, data: bytes) -> None:
        raise NotImplementedError

    def _delete_bytes(self, key: StoreKey) -> bool:
        raise NotImplementedError

    def keys(self, namespace: str) -> list[str]:
        raise NotImplementedError

    # -- record API -----------------------------------------------------------

    def put(self, key: StoreKey, record: OffChainRecord) -> bool:
        plaintext = self.vault.decrypt_record(record.payload, record.payload.key_owner)
        if sha256(plaintext) != record.explanation_hash:
            raise HashMismatchError(
                f"declared hash {record.explanation_hash.hex} does not match payload"
            )
        with self._lock:
            self._write_bytes(key, canonical_serialize(record.to_dict()))
        return True

    def get(self, key: StoreKey) -> OffChainRecord | None:
        data = self._read_bytes(key)
        if data is None:
            return None
        try:
            return OffChainRecord.from_dict(canonical_deserialize(data))
        except (CanonicalParseError, KeyError, ValueError, TypeError) as exc:
            raise CorruptRecordError(f"{key.namespace}/{key.id}: {exc}") from exc

    def delete(self, key: StoreKey) -> bool:
        with self._lock:
            return self._delete_bytes(key)

    def tamper(self, key: StoreKey, byte_offset: int) -> bool:
        """Flip one bit of a stored record in place (integrity experiments)."""
        data = self._read_bytes(key)
        if data is None:
            return False
        mutated = bytearray(data)
        mutated[byte_offset % len(mutated)] ^= 0x01
        with self._lock:
            self._write_bytes(key, bytes(mutated))
        return True

    def store_explanation_pair(
        self, customer_id: str, timestamp_ms: int, plaintext_artifact: bytes, org_id: str,
        namespace: str = "explanations",
    ) -> tuple[OffChainRecord, OnChainAnchor]:
        """Write the encrypted record and return its matching chain anchor."""
        digest = sha256(plaintext_artifact)
        record = OffChainRecord(
            customer_id=customer_id,
            timestamp_ms=timestamp_ms,
            explanation_hash=digest,
            payload=self.vault.encrypt_record(plaintext_artifact, org_id),
        )
        self.put(StoreKey(namespace, explanation_record_id(customer_id, timestamp_ms)), record)
        anchor = OnChainAnchor(
            customer_id=customer_id, timestamp_ms=timestamp_ms, explanation_hash=digest
        )
        return record, anchor


class MemoryStore(OffchainStore):
    def __init__(self, vault: KeyVault):
        super().__init__(vault)
        self._data: dict[tuple[str, str], bytes] = {}

    def _read_bytes(self, key: StoreKey) -> bytes | None:
        return self._data.get((key.namespace, key.id))

    def _write_bytes(self, key: StoreKey, data: bytes) -> None:
        self._data[(key.namespace, key.id)] = data

    def _delete_bytes(self, key: StoreKey) -> bool:
        return self._data.pop((key.namespace, key.id), None) is not None

    def keys(self, namespace: str) -> list[str]:
        return sorted(id_ for ns, id_ in self._data if ns == namespace)


class FileStore(OffchainStore):
    """Directory layout: <root>/<namespace>/<id> holding canonical bytes."""

    def __init__(self, vault: KeyVault, root: str | Path):
        super().__init__(vault)
        self.root = Path(root)
        for ns in NAMESPACES:
            (self.root / ns).mkdir(parents=True, exist_ok=True)

    def _path(self, key: StoreKey) -> Path:
        return self.root / key.namespace / key.id

    def _read_bytes(self, key: StoreKey) -> bytes | None:
        path = self._path(key)
        return path.read_bytes() if path.exists() else None

    def _write_bytes(self, key: StoreKey, data: bytes) -> None:
        self._path(key).write_bytes(data)

    def _delete_bytes(self, key: StoreKey) -> bool:
        path = self._path(key)
        if not path.exists():
            return False
        path.unlink()
        return True

    def keys(self, namespace: str) -> list[str]:
        return sorted(p.name for p in (self.root / namespace).iterdir() if p.is_file())
