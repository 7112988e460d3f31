from __future__ import annotations

import numpy as np
import pytest

from trustboost.crypto import KeyVault
from trustboost.ledger import AnchorTx, Ledger, NetworkConfig, TxKind
from trustboost.model import AttributeSpec, Hyperparams, Schema
from trustboost.store import MemoryStore


@pytest.fixture
def vault() -> KeyVault:
    v = KeyVault()
    for org in ("org-1", "org-2", "org-3", "org-4"):
        v.register_org(org)
    return v


@pytest.fixture
def fast_ledger() -> Ledger:
    return Ledger(
        NetworkConfig(
            org_count=4,
            hop_delay_mean_ms=1.0,
            hop_delay_jitter_ms=0.0,
            block_interval_ms=100,
            max_txs_per_block=1000,
            validation_delay_ms_per_tx=0.0,
        ),
        seed=1,
    )


@pytest.fixture
def small_schema() -> Schema:
    return Schema(tuple(AttributeSpec(f"attr_{i}", ("no", "yes")) for i in range(6)))


@pytest.fixture
def tiny_hyper() -> Hyperparams:
    return Hyperparams(
        input_features=12,
        conv_kernels=(3,),
        conv_filters=(6,),
        conv_strides=(1,),
        fc_widths=(10,),
        dropout_rate=0.0,
    )


def build_pipeline(vault: KeyVault, ledger: Ledger, count: int, seed: int = 0):
    """Populate a store + ledger with `count` committed anchored records."""
    store = MemoryStore(vault)
    rng = np.random.default_rng(seed)
    for i in range(count):
        payload = f"artifact-{seed}-{i}-{rng.integers(1 << 30)}".encode()
        _, anchor = store.store_explanation_pair(f"cust-{i:05d}", 1_000 + i, payload, "org-1")
        ledger.submit_tx(
            AnchorTx.create(TxKind.EXPLANATION, anchor.to_dict(), "org-1", 1_000 + i)
        )
    ledger.run_ordering()
    return store
