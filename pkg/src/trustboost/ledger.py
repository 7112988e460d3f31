"""Simulated permissioned ledger: hash-chained blocks of anchor transactions.

A single deterministic ordering service batches submitted transactions into
blocks on a simulated millisecond clock. Per-block commit delay models
endorsement cost (per-transaction validation plus one network hop per
organization node), so latency grows and throughput falls as organizations
are added under a fixed workload. Hop jitter is keyed by (seed, height,
node) rather than drawn sequentially, which keeps a sweep over node counts
monotone and makes reloaded ledgers reproducible.
"""

from __future__ import annotations

import hashlib
import statistics
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterator

from .canonical import canonical_deserialize, canonical_serialize
from .crypto import ZERO_DIGEST, Digest, hash_canonical

__all__ = [
    "TxKind",
    "OnChainAnchor",
    "AnchorTx",
    "Block",
    "NetworkConfig",
    "PerfReport",
    "Ledger",
    "MalformedTxError",
    "DuplicateTxError",
    "EmptyLedgerError",
    "NegativeInputError",
    "onchain_cost_estimate",
    "preset_config",
]


class MalformedTxError(ValueError):
    """Transaction violates its structural invariants."""


class DuplicateTxError(ValueError):
    """Transaction id was already submitted."""


class EmptyLedgerError(RuntimeError):
    """No committed transactions to report on."""


class NegativeInputError(ValueError):
    """Cost estimation inputs must be non-negative."""


class TxKind(str, Enum):
    EXPLANATION = "ExplanationAnchor"
    CONSENT = "ConsentAnchor"
    MODEL_CONFIG = "ModelConfigAnchor"
    ACTOR_CREDENTIAL = "ActorCredentialAnchor"


@dataclass
class OnChainAnchor:
    """The permanently recorded triple binding a decision explanation."""

    customer_id: str
    timestamp_ms: int
    explanation_hash: Digest

    def to_dict(self) -> dict[str, Any]:
        return {
            "customer_id": self.customer_id,
            "timestamp_ms": self.timestamp_ms,
            "explanation_hash": self.explanation_hash.hex,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "OnChainAnchor":
        return cls(d["customer_id"], d["timestamp_ms"], Digest.from_hex(d["explanation_hash"]))


def compute_tx_id(kind: TxKind, payload: dict[str, Any], submitter_org: str) -> Digest:
    return hash_canonical(
        {"kind": kind.value, "payload": payload, "submitter_org": submitter_org}
    )


@dataclass
class AnchorTx:
    tx_id: Digest
    kind: TxKind
    payload: dict[str, Any]
    submitter_org: str
    submit_time: int

    @classmethod
    def create(
        cls, kind: TxKind, payload: dict[str, Any], submitter_org: str, submit_time: int
    ) -> "AnchorTx":
        return cls(compute_tx_id(kind, payload, submitter_org), kind, payload, submitter_org, submit_time)

    def to_dict(self) -> dict[str, Any]:
        return {
            "tx_id": self.tx_id.hex,
            "kind": self.kind.value,
            "payload": self.payload,
            "submitter_org": self.submitter_org,
            "submit_time": self.submit_time,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AnchorTx":
        return cls(
            Digest.from_hex(d["tx_id"]),
            TxKind(d["kind"]),
            d["payload"],
            d["submitter_org"],
            d["submit_time"],
        )


@dataclass
class TxReceipt:
    tx_id: Digest
    accepted: bool


def tx_list_root(txs: list[AnchorTx]) -> Digest:
    return hash_canonical([tx.to_dict() for tx in txs])


@dataclass
class Block:
    height: int
    prev_hash: Digest
    tx_list: list[AnchorTx]
    tx_root: Digest
    commit_time: int

    def block_hash(self) -> Digest:
        return hash_canonical(
            {
                "height": self.height,
                "prev_hash": self.prev_hash.hex,
                "tx_root": self.tx_root.hex,
                "commit_time": self.commit_time,
            }
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash.hex,
            "tx_root": self.tx_root.hex,
            "commit_time": self.commit_time,
            "tx_list": [tx.to_dict() for tx in self.tx_list],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Block":
        return cls(
            height=d["height"],
            prev_hash=Digest.from_hex(d["prev_hash"]),
            tx_list=[AnchorTx.from_dict(t) for t in d["tx_list"]],
            tx_root=Digest.from_hex(d["tx_root"]),
            commit_time=d["commit_time"],
        )


@dataclass
class NetworkConfig:
    org_count: int = 4
    hop_delay_mean_ms: float = 20.0
    hop_delay_jitter_ms: float = 5.0
    block_interval_ms: int = 500
    max_txs_per_block: int = 100
    validation_delay_ms_per_tx: float = 1.0

    def __post_init__(self) -> None:
        if self.org_count < 1:
            raise ValueError("org_count must be >= 1")
        if self.block_interval_ms <= 0 or self.max_txs_per_block <= 0:
            raise ValueError("block interval and batch size must be positive")
        if min(self.hop_delay_mean_ms, self.hop_delay_jitter_ms, self.validation_delay_ms_per_tx) < 0:
            raise ValueError("delays must be non-negative")


def preset_config(name: str, org_count: int = 4) -> NetworkConfig:
    """Named delay presets; the mapping to real platforms is calibration only."""
    if name == "fabric-like":
        return NetworkConfig(
            org_count=org_count,
            hop_delay_mean_ms=10.0,
            hop_delay_jitter_ms=3.0,
            block_interval_ms=250,
            max_txs_per_block=100,
            validation_delay_ms_per_tx=0.5,
        )
    if name == "ethereum-like":
        return NetworkConfig(
            org_count=org_count,
            hop_delay_mean_ms=45.0,
            hop_delay_jitter_ms=12.0,
            block_interval_ms=1000,
            max_txs_per_block=150,
            validation_delay_ms_per_tx=2.0,
        )
    raise ValueError(f"unknown preset: {name}")


@dataclass
class PerfReport:
    per_tx_latency_ms: list[int]
    mean_latency_ms: float
    median_latency_ms: float
    p95_latency_ms: float
    throughput_tps: float
    node_count: int
    tx_count: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_tx_latency_ms": self.per_tx_latency_ms,
            "mean_latency_ms": self.mean_latency_ms,
            "median_latency_ms": self.median_latency_ms,
            "p95_latency_ms": self.p95_latency_ms,
            "throughput_tps": self.throughput_tps,
            "node_count": self.node_count,
            "tx_count": self.tx_count,
        }


def _keyed_unit(seed: int, height: int, node: int) -> float:
    """Deterministic uniform in [0, 1) keyed by (seed, height, node)."""
    digest = hashlib.sha256(f"{seed}|{height}|{node}".encode()).digest()
    return (int.from_bytes(digest[:8], "big") >> 11) / float(1 << 53)


class Ledger:
    """Append-only chain with a serialized, deterministic block producer."""

    def __init__(self, config: NetworkConfig | None = None, seed: int = 0, genesis_time_ms: int = 0):
        self.config = config or NetworkConfig()
        self.seed = seed
        genesis = Block(
            height=0,
            prev_hash=ZERO_DIGEST,
            tx_list=[],
            tx_root=tx_list_root([]),
            commit_time=genesis_time_ms,
        )
        self.chain: list[Block] = [genesis]
        self.head_hash: Digest = genesis.block_hash()
        self._queue: list[AnchorTx] = []
        self._known_tx_ids: set[bytes] = set()
        self._latencies: list[int] = []

    # -- submission ----------------------------------------------------------

    def submit_tx(self, tx: AnchorTx) -> TxReceipt:
        expected = compute_tx_id(tx.kind, tx.payload, tx.submitter_org)
        if tx.tx_id != expected:
            raise MalformedTxError(f"tx_id does not match contents: {tx.tx_id.hex}")
        if tx.submit_time < 0:
            raise MalformedTxError("submit_time must be non-negative")
        if tx.tx_id.value in self._known_tx_ids:
            raise DuplicateTxError(tx.tx_id.hex)
        self._known_tx_ids.add(tx.tx_id.value)
        self._queue.append(tx)
        return TxReceipt(tx.tx_id, accepted=True)

    @property
    def pending_count(self) -> int:
        return len(self._queue)

    # -- ordering ------------------------------------------------------------

    def _next_boundary(self, after_ms: int) -> int:
        interval = self.config.block_interval_ms
        genesis = self.chain[0].commit_time
        k = max(0, (after_ms - genesis) // interval) + 1
        return genesis + k * interval

    def _hop_total_ms(self, height: int) -> int:
        cfg = self.config
        total = 0.0
        for node in range(cfg.org_count):
            u = _keyed_unit(self.seed, height, node)
            total += max(0.0, cfg.hop_delay_mean_ms + cfg.hop_delay_jitter_ms * (2.0 * u - 1.0))
        return round(total)

    def run_ordering(self, until_ms: int | None = None) -> list[Block]:
        """Batch queued txs into blocks; drains the queue when until_ms is None."""
        new_blocks: list[Block] = []
        while self._queue:
            earliest = min(tx.submit_time for tx in self._queue)
            cut = max(self._next_boundary(self.chain[-1].commit_time), self._next_boundary(earliest - 1))
            if until_ms is not None and cut > until_ms:
                break
            batch: list[AnchorTx] = []
            remaining: list[AnchorTx] = []
            for tx in self._queue:
                if tx.submit_time <= cut and len(batch) < self.config.max_txs_per_block:
                    batch.append(tx)
                else:
                    remaining.append(tx)
            if not batch:
                break
            self._queue = remaining
            height = len(self.chain)
            validation = round(self.config.validation_delay_ms_per_tx * len(batch))
            commit_time = cut + validation + self._hop_total_ms(height)
            block = Block(
                height=height,
                prev_hash=self.head_hash,
                tx_list=batch,
                tx_root=tx_list_root(batch),
                commit_time=commit_time,
            )
            self.chain.append(block)
            self.head_hash = block.block_hash()
            self._latencies.extend(commit_time - tx.submit_time for tx in batch)
            new_blocks.append(block)
        return new_blocks

    # -- validation ----------------------------------------------------------

    def validate_chain(self) -> tuple[bool, int | None]:
        """Verify every hash, link, and tx root; returns (valid, first bad height)."""
        prev_commit = None
        for k, block in enumerate(self.chain):
            if block.height != k:
                return False, k
            if k == 0 and block.prev_hash != ZERO_DIGEST:
                return False, 0
            if k > 0 and block.prev_hash != self.chain[k - 1].block_hash():
                return False, k
            if block.tx_root != tx_list_root(block.tx_list):
                return False, k
            for tx in block.tx_list:
                if tx.tx_id != compute_tx_id(tx.kind, tx.payload, tx.submitter_org):
                    return False, k
            if prev_commit is not None and block.commit_time < prev_commit:
                return False, k
            prev_commit = block.commit_time
        if self.chain[-1].block_hash() != self.head_hash:
            return False, self.chain[-1].height
        return True, None

    # -- queries -------------------------------------------------------------

    def committed_txs(self) -> Iterator[tuple[AnchorTx, int]]:
        for block in self.chain:
            for tx in block.tx_list:
                yield tx, block.height

    def query_anchor(
        self, customer_id: str, explanation_hash: Digest, timestamp_ms: int | None = None
    ) -> tuple[OnChainAnchor, int] | None:
        """Exact-match lookup over committed explanation anchors."""
        for tx, height in self.committed_txs():
            if tx.kind != TxKind.EXPLANATION:
                continue
            anchor = OnChainAnchor.from_dict(tx.payload)
            if anchor.customer_id == customer_id and anchor.explanation_hash == explanation_hash:
                if timestamp_ms is not None and anchor.timestamp_ms != timestamp_ms:
                    continue
                return anchor, height
        return None

    def query_consent_hash(self, expert_id: str, org_id: str) -> Digest | None:
        """Latest committed consent digest for (expert, org), by chain order."""
        latest: Digest | None = None
        for tx, _height in self.committed_txs():
            if tx.kind != TxKind.CONSENT:
                continue
            if tx.payload.get("expert_id") == expert_id and tx.payload.get("org_id") == org_id:
                latest = Digest.from_hex(tx.payload["consent_hash"])
        return latest

    def perf_report(self) -> PerfReport:
        if not self._latencies:
            raise EmptyLedgerError("no committed transactions")
        committed = [tx for tx, _ in self.committed_txs()]
        first_submit = min(tx.submit_time for tx in committed)
        last_commit = max(b.commit_time for b in self.chain if b.tx_list)
        span_s = (last_commit - first_submit) / 1000.0
        latencies = sorted(self._latencies)
        p95_index = max(0, -(-len(latencies) * 95 // 100) - 1)
        return PerfReport(
            per_tx_latency_ms=list(self._latencies),
            mean_latency_ms=statistics.fmean(latencies),
            median_latency_ms=float(statistics.median(latencies)),
            p95_latency_ms=float(latencies[p95_index]),
            throughput_tps=len(committed) / span_s if span_s > 0 else float(len(committed)),
            node_count=self.config.org_count,
            tx_count=len(committed),
        )

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Append-only file of length-prefixed canonical block records."""
        with open(path, "wb") as fh:
            for block in self.chain:
                record = canonical_serialize(block.to_dict())
                fh.write(len(record).to_bytes(4, "big"))
                fh.write(record)

    @classmethod
    def load(cls, path: str | Path, config: NetworkConfig | None = None, seed: int = 0) -> "Ledger":
        blocks: list[Block] = []
        with open(path, "rb") as fh:
            while True:
                header = fh.read(4)
                if not header:
                    break
                if len(header) != 4:
                    raise ValueError("truncated ledger file")
                size = int.from_bytes(header, "big")
                record = fh.read(size)
                if len(record) != size:
                    raise ValueError("truncated ledger record")
                blocks.append(Block.from_dict(canonical_deserialize(record)))
        if not blocks:
            raise ValueError("empty ledger file")
        ledger = cls(config=config, seed=seed, genesis_time_ms=blocks[0].commit_time)
        ledger.chain = blocks
        ledger.head_hash = blocks[-1].block_hash()
        for block in blocks:
            for tx in block.tx_list:
                ledger._known_tx_ids.add(tx.tx_id.value)
                ledger._latencies.append(block.commit_time - tx.submit_time)
        valid, bad_height = ledger.validate_chain()
        if not valid:
            raise ValueError(f"reloaded chain invalid at height {bad_height}")
        return ledger


def onchain_cost_estimate(byte_count: int, usd_per_kb: float) -> float:
    """Storage cost in USD at the given rate; 1 KB is 1000 bytes here."""
    if byte_count < 0 or usd_per_kb < 0:
        raise NegativeInputError("byte_count and usd_per_kb must be non-negative")
    return byte_count * usd_per_kb / 1000.0
