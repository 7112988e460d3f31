"""Hashing and envelope encryption shared by the ledger, store, and audits.

Structured values are always hashed as sha256(canonical_serialize(value));
raw-byte hashing is reserved for opaque file payloads. Record payloads are
protected with AES-256-GCM under a fresh data key, which is itself wrapped
under the owning organization's vault key so records can be shared across
organizations by re-wrapping the data key without touching the ciphertext.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .canonical import canonical_serialize

__all__ = [
    "Digest",
    "ZERO_DIGEST",
    "EncryptedPayload",
    "KeyVault",
    "UnknownOrgError",
    "AuthenticationFailure",
    "sha256",
    "hash_canonical",
]

_KEY_BYTES = 32
_NONCE_BYTES = 12
_TAG_BYTES = 16


class UnknownOrgError(KeyError):
    """Organization has no key registered in the vault."""


class AuthenticationFailure(Exception):
    """Ciphertext, tag, or wrapped key failed authentication."""


@dataclass(frozen=True)
class Digest:
    """A 32-byte SHA-256 digest; hex form is lowercase, 64 chars."""

    value: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.value, bytes) or len(self.value) != 32:
            raise ValueError("digest must be exactly 32 bytes")

    @property
    def hex(self) -> str:
        return self.value.hex()

    @classmethod
    def from_hex(cls, text: str) -> "Digest":
        return cls(bytes.fromhex(text))

    def __str__(self) -> str:
        return self.hex


ZERO_DIGEST = Digest(b"\x00" * 32)


def sha256(data: bytes) -> Digest:
    return Digest(hashlib.sha256(data).digest())


def hash_canonical(value: Any) -> Digest:
    """Digest of a structured value over its canonical byte form."""
    return sha256(canonical_serialize(value))


@dataclass
class EncryptedPayload:
    """Envelope-encrypted record: data key wrapped under the owner org's key."""

    wrapped_data_key: bytes  # wrap nonce || AES-GCM(ct || tag) of the data key
    nonce: bytes
    ciphertext: bytes
    auth_tag: bytes
    key_owner: str

    def to_dict(self) -> dict[str, str]:
        return {
            "wrapped_data_key": self.wrapped_data_key.hex(),
            "nonce": self.nonce.hex(),
            "ciphertext": self.ciphertext.hex(),
            "auth_tag": self.auth_tag.hex(),
            "key_owner": self.key_owner,
        }

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "EncryptedPayload":
        return cls(
            wrapped_data_key=bytes.fromhex(d["wrapped_data_key"]),
            nonce=bytes.fromhex(d["nonce"]),
            ciphertext=bytes.fromhex(d["ciphertext"]),
            auth_tag=bytes.fromhex(d["auth_tag"]),
            key_owner=d["key_owner"],
        )


class KeyVault:
    """Per-organization key store, optionally persisted to a JSON file.

    Safe for concurrent readers; key registration is serialized.
    """

    def __init__(self, path: str | Path | None = None):
        self._lock = threading.Lock()
        self._keys: dict[str, bytes] = {}
        self._path = Path(path) if path is not None else None
        if self._path is not None and self._path.exists():
            raw = json.loads(self._path.read_text())
            self._keys = {org: bytes.fromhex(k) for org, k in raw.items()}

    def register_org(self, org_id: str, key: bytes | None = None) -> None:
        if key is not None and len(key) != _KEY_BYTES:
            raise ValueError(f"org key must be {_KEY_BYTES} bytes")
        with self._lock:
            if org_id in self._keys:
                raise ValueError(f"org already registered: {org_id}")
            self._keys[org_id] = key if key is not None else os.urandom(_KEY_BYTES)
            if self._path is not None:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                self._path.write_text(
                    json.dumps({org: k.hex() for org, k in self._keys.items()})
                )

    def has_org(self, org_id: str) -> bool:
        return org_id in self._keys

    def _org_key(self, org_id: str) -> bytes:
        key = self._keys.get(org_id)
        if key is None:
            raise UnknownOrgError(org_id)
        return key

    # -- envelope operations ------------------------------------------------

    def encrypt_record(self, plaintext: bytes, org_id: str) -> EncryptedPayload:
        """Encrypt under a fresh data key wrapped for org_id."""
        org_key = self._org_key(org_id)
        data_key = os.urandom(_KEY_BYTES)
        nonce = os.urandom(_NONCE_BYTES)
        sealed = AESGCM(data_key).encrypt(nonce, plaintext, None)
        return EncryptedPayload(
            wrapped_data_key=self._wrap(data_key, org_key),
            nonce=nonce,
            ciphertext=sealed[:-_TAG_BYTES],
            auth_tag=sealed[-_TAG_BYTES:],
            key_owner=org_id,
        )

    def decrypt_record(self, payload: EncryptedPayload, org_id: str) -> bytes:
        """Recover plaintext using org_id's key; any tampering fails here."""
        org_key = self._org_key(org_id)
        data_key = self._unwrap(payload.wrapped_data_key, org_key)
        try:
            return AESGCM(data_key).decrypt(
                payload.nonce, payload.ciphertext + payload.auth_tag, None
            )
        except (InvalidTag, ValueError) as exc:
            raise AuthenticationFailure("payload failed authentication") from exc

    def rewrap_key(
        self, payload: EncryptedPayload, from_org: str, to_org: str
    ) -> EncryptedPayload:
        """Re-wrap the data key for to_org; ciphertext bytes are unchanged."""
        from_key = self._org_key(from_org)
        to_key = self._org_key(to_org)
        data_key = self._unwrap(payload.wrapped_data_key, from_key)
        return EncryptedPayload(
            wrapped_data_key=self._wrap(data_key, to_key),
            nonce=payload.nonce,
            ciphertext=payload.ciphertext,
            auth_tag=payload.auth_tag,
            key_owner=to_org,
        )

    @staticmethod
    def _wrap(data_key: bytes, org_key: bytes) -> bytes:
        nonce = os.urandom(_NONCE_BYTES)
        return nonce + AESGCM(org_key).encrypt(nonce, data_key, None)

    @staticmethod
    def _unwrap(wrapped: bytes, org_key: bytes) -> bytes:
        if len(wrapped) < _NONCE_BYTES + _TAG_BYTES:
            raise AuthenticationFailure("wrapped data key too short")
        nonce, sealed = wrapped[:_NONCE_BYTES], wrapped[_NONCE_BYTES:]
        try:
            return AESGCM(org_key).decrypt(nonce, sealed, None)
        except (InvalidTag, ValueError) as exc:
            raise AuthenticationFailure("wrapped data key failed authentication") from exc
