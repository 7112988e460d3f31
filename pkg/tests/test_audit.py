from __future__ import annotations

import pytest

from trustboost.audit import (
    Auditor,
    FewerThanTwoOrgsError,
    InsufficientFilesError,
    TamperVerdict,
    VerdictReason,
)
from trustboost.consent import (
    AccessConsent,
    ConsentEvent,
    ConsentEventKind,
    ConsentRegistry,
)
from trustboost.ledger import Ledger, NetworkConfig
from trustboost.store import StoreKey

from conftest import build_pipeline

ORGS = ["org-1", "org-2", "org-3", "org-4"]


class LedgerWithout:
    """Read-only ledger view hiding one anchored explanation (forked chain)."""

    def __init__(self, ledger: Ledger, hidden_customer: str):
        self._ledger = ledger
        self._hidden = hidden_customer

    def query_anchor(self, customer_id, explanation_hash, timestamp_ms=None):
        if customer_id == self._hidden:
            return None
        return self._ledger.query_anchor(customer_id, explanation_hash, timestamp_ms)


@pytest.fixture
def pipeline(vault, fast_ledger):
    store = build_pipeline(vault, fast_ledger, count=20, seed=5)
    return store, fast_ledger, vault


def test_clean_record_audits_clean(pipeline):
    store, ledger, vault = pipeline
    auditor = Auditor(store, ledger, vault)
    verdict = auditor.audit_explanation("cust-00003", 1003)
    assert verdict == TamperVerdict(False, VerdictReason.CLEAN, verdict.details)


def test_missing_offchain_record(pipeline):
    store, ledger, vault = pipeline
    store.delete(StoreKey("explanations", "cust-00003_1003"))
    verdict = Auditor(store, ledger, vault).audit_explanation("cust-00003", 1003)
    assert verdict.tampered and verdict.reason == VerdictReason.MISSING_OFFCHAIN_RECORD


def test_missing_offchain_with_withdrawal_is_lawful(pipeline):
    store, ledger, vault = pipeline
    consents = ConsentRegistry(ORGS)
    consents.init_consent("cust-00003", "org-1")
    consents.apply_event("cust-00003", "org-1",
                         ConsentEvent(ConsentEventKind.REQUEST_WITHDRAWAL, "cust-00003", 1))
    consents.apply_event("cust-00003", "org-1",
                         ConsentEvent(ConsentEventKind.PROCESS_WITHDRAWAL, "cust-00003", 2))
    store.delete(StoreKey("explanations", "cust-00003_1003"))
    verdict = Auditor(store, ledger, vault, consents).audit_explanation("cust-00003", 1003)
    assert not verdict.tampered and verdict.reason == VerdictReason.DATA_WITHDRAWN


def test_missing_onchain_triple(pipeline):
    store, ledger, vault = pipeline
    forked = LedgerWithout(ledger, "cust-00007")
    verdict = Auditor(store, forked, vault).audit_explanation("cust-00007", 1007)
    assert verdict.tampered and verdict.reason == VerdictReason.MISSING_ONCHAIN_TRIPLE


def test_ciphertext_flip_yields_decrypt_failure_or_mismatch(pipeline):
    store, ledger, vault = pipeline
    key = StoreKey("explanations", "cust-00004_1004")
    record = store.get(key)
    ciphertext_hex_offset = None
    raw = store._read_bytes(key)
    ciphertext_hex_offset = raw.index(record.payload.ciphertext.hex().encode())
    store.tamper(key, ciphertext_hex_offset)
    verdict = Auditor(store, ledger, vault).audit_explanation("cust-00004", 1004)
    assert verdict.tampered
    assert verdict.reason in (VerdictReason.DECRYPT_FAILURE, VerdictReason.HASH_MISMATCH)


def test_verdict_flag_consistency_enforced():
    with pytest.raises(ValueError):
        TamperVerdict(True, VerdictReason.CLEAN)
    with pytest.raises(ValueError):
        TamperVerdict(False, VerdictReason.HASH_MISMATCH)
    with pytest.raises(ValueError):
        TamperVerdict(True, VerdictReason.DATA_WITHDRAWN)


def _registry_with_experts() -> ConsentRegistry:
    registry = ConsentRegistry(ORGS)
    for o, org in enumerate(ORGS):
        for e in range(3):
            registry.init_consent(f"h{o}-{e}", org)
    return registry


def test_consent_audit_clean(pipeline):
    store, ledger, vault = pipeline
    registry = _registry_with_experts()
    verdict = Auditor(store, ledger, vault, registry).audit_consent("h0-0")
    assert not verdict.tampered and verdict.reason == VerdictReason.CLEAN


def test_consent_audit_detects_single_field_flip(pipeline):
    store, ledger, vault = pipeline
    registry = _registry_with_experts()
    registry.replicas_of("h1-2", "org-2")["org-4"].access = AccessConsent.INVALID
    verdict = Auditor(store, ledger, vault, registry).audit_consent("h1-2")
    assert verdict.tampered and verdict.reason == VerdictReason.CONSENT_REPLICA_MISMATCH
    assert "org-4" in verdict.details


def test_consent_audit_lists_all_divergent_pairs(pipeline):
    store, ledger, vault = pipeline
    registry = _registry_with_experts()
    replicas = registry.replicas_of("h2-0", "org-3")
    replicas["org-1"].access = AccessConsent.NOT_AGREED
    replicas["org-2"].access = AccessConsent.INVALID
    verdict = Auditor(store, ledger, vault, registry).audit_consent("h2-0")
    assert verdict.tampered
    # brute-force oracle: every unordered pair with differing content hashes
    from trustboost.consent import consent_state_hash

    expected = set()
    holders = sorted(replicas)
    for i, a in enumerate(holders):
        for b in holders[i + 1:]:
            if consent_state_hash(replicas[a]) != consent_state_hash(replicas[b]):
                expected.add((a, b))
    for a, b in expected:
        assert f"{a} != {b}" in verdict.details
    assert len(expected) == verdict.details.count("!=")


def test_consent_audit_requires_two_orgs(pipeline):
    store, ledger, vault = pipeline
    single = ConsentRegistry(["org-1"])
    single.init_consent("h1", "org-1")
    with pytest.raises(FewerThanTwoOrgsError):
        Auditor(store, ledger, vault, single).audit_consent("h1")


def test_batch_experiment_zero_fraction(pipeline):
    store, ledger, vault = pipeline
    report = Auditor(store, ledger, vault).batch_audit_experiment(20, 0.0, seed=3)
    assert report.tampered_found == 0
    assert all(not v.tampered for _, v in report.verdicts)


def test_batch_experiment_exact_detection(vault):
    ledger = Ledger(NetworkConfig(org_count=2, block_interval_ms=50, max_txs_per_block=1000), seed=2)
    store = build_pipeline(vault, ledger, count=200, seed=8)
    report = Auditor(store, ledger, vault).batch_audit_experiment(200, 0.1, seed=3)
    assert report.total_files == 200
    assert report.tampered_found == 20
    flagged = {rid for rid, v in report.verdicts if v.tampered}
    assert len(flagged) == 20


def test_batch_experiment_insufficient_files(pipeline):
    store, ledger, vault = pipeline
    with pytest.raises(InsufficientFilesError):
        Auditor(store, ledger, vault).batch_audit_experiment(500, 0.1, seed=0)


def test_batch_workload_grows_with_tamper_fraction(vault):
    ops = []
    for fraction in (0.02, 0.10, 0.20):
        ledger = Ledger(NetworkConfig(org_count=2, block_interval_ms=50, max_txs_per_block=1000), seed=4)
        store = build_pipeline(vault, ledger, count=100, seed=4)
        report = Auditor(store, ledger, vault).batch_audit_experiment(100, fraction, seed=9)
        assert report.tampered_found == int(fraction * 100)
        ops.append(report.audit_ops)
    assert ops == sorted(ops) and ops[0] < ops[-1]
