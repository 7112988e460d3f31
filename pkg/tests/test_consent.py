from __future__ import annotations

import itertools

import pytest

from trustboost.consent import (
    AccessConsent,
    AcquisitionConsent,
    AlreadyRegisteredError,
    ConsentEvent,
    ConsentEventKind,
    ConsentRegistry,
    ConsentState,
    IllegalTransitionError,
    WithdrawalConsent,
    apply_transition,
    consent_state_hash,
    initial_state,
    legal_events,
)

ORGS = ["org-1", "org-2", "org-3", "org-4"]


def _event(kind: ConsentEventKind, ts: int = 100) -> ConsentEvent:
    return ConsentEvent(kind=kind, actor_id="h1", timestamp_ms=ts)


def test_initial_state_values():
    s = initial_state("h1", "org-1")
    assert s.acquisition == AcquisitionConsent.AWAITING
    assert s.withdrawal == WithdrawalConsent.NOT_REQUESTED
    assert s.access == AccessConsent.AWAITING


def test_reinit_rejected():
    registry = ConsentRegistry(ORGS)
    registry.init_consent("h1", "org-1")
    with pytest.raises(AlreadyRegisteredError):
        registry.init_consent("h1", "org-1")


def test_twelve_experts_once_each_means_twelve_states_per_replica():
    registry = ConsentRegistry(ORGS)
    for o, org in enumerate(ORGS):
        for e in range(3):
            registry.init_consent(f"h{o}-{e}", org)
    for org in ORGS:
        assert len(registry.snapshot_all(org)) == 12


def test_full_cross_registration_means_48_states_per_replica():
    registry = ConsentRegistry(ORGS)
    for e in range(12):
        for org in ORGS:
            registry.init_consent(f"h{e}", org)
    for org in ORGS:
        assert len(registry.snapshot_all(org)) == 48


def test_grant_acquisition():
    s = apply_transition(initial_state("h1", "org-1"), _event(ConsentEventKind.GRANT_ACQUISITION))
    assert s.acquisition == AcquisitionConsent.APPROVED
    assert s.updated_ms == 100


def test_process_withdrawal_voids_acquisition_and_access():
    s = initial_state("h1", "org-1")
    s = apply_transition(s, _event(ConsentEventKind.GRANT_ACQUISITION))
    s = apply_transition(s, _event(ConsentEventKind.GRANT_ACCESS))
    s = apply_transition(s, _event(ConsentEventKind.REQUEST_WITHDRAWAL))
    s = apply_transition(s, _event(ConsentEventKind.PROCESS_WITHDRAWAL))
    assert s.acquisition == AcquisitionConsent.INVALID
    assert s.withdrawal == WithdrawalConsent.REQUESTED
    assert s.access == AccessConsent.INVALID


def test_illegal_transitions():
    rejected = apply_transition(initial_state("h1", "org-1"), _event(ConsentEventKind.REJECT_ACQUISITION))
    with pytest.raises(IllegalTransitionError):
        apply_transition(rejected, _event(ConsentEventKind.GRANT_ACQUISITION))
    with pytest.raises(IllegalTransitionError):
        apply_transition(initial_state("h1", "org-1"), _event(ConsentEventKind.PROCESS_WITHDRAWAL))


def test_invalidate_from_any_state():
    s = initial_state("h1", "org-1")
    s = apply_transition(s, _event(ConsentEventKind.INVALIDATE))
    assert (s.acquisition, s.withdrawal, s.access) == (
        AcquisitionConsent.INVALID,
        WithdrawalConsent.INVALID,
        AccessConsent.INVALID,
    )


def _reachable_states() -> set[tuple[str, str, str]]:
    """BFS over the event alphabet from the initial state."""
    seen: set[tuple[str, str, str]] = set()
    frontier = [initial_state("h", "o")]
    while frontier:
        state = frontier.pop()
        key = (state.acquisition.value, state.withdrawal.value, state.access.value)
        if key in seen:
            continue
        seen.add(key)
        for kind in ConsentEventKind:
            try:
                frontier.append(apply_transition(state, _event(kind)))
            except IllegalTransitionError:
                pass
    return seen


def test_reachable_states_stay_within_enumerations():
    acquisition = {v.value for v in AcquisitionConsent}
    withdrawal = {v.value for v in WithdrawalConsent}
    access = {v.value for v in AccessConsent}
    reachable = _reachable_states()
    assert reachable  # sanity
    for caq, cw, ca in reachable:
        assert caq in acquisition and cw in withdrawal and ca in access


def test_legal_events_projection():
    s = initial_state("h1", "org-1")
    kinds = set(legal_events(s))
    assert ConsentEventKind.GRANT_ACQUISITION in kinds
    assert ConsentEventKind.PROCESS_WITHDRAWAL not in kinds
    s = apply_transition(s, _event(ConsentEventKind.REQUEST_WITHDRAWAL))
    assert ConsentEventKind.PROCESS_WITHDRAWAL in set(legal_events(s))


def test_state_hash_ignores_org_and_timestamp():
    a = ConsentState("h1", "org-1", AcquisitionConsent.APPROVED,
                     WithdrawalConsent.NOT_REQUESTED, AccessConsent.AWAITING, 100)
    b = ConsentState("h1", "org-2", AcquisitionConsent.APPROVED,
                     WithdrawalConsent.NOT_REQUESTED, AccessConsent.AWAITING, 999)
    assert consent_state_hash(a) == consent_state_hash(b)


def test_state_hash_sensitive_to_content():
    a = initial_state("h1", "org-1")
    b = apply_transition(a, _event(ConsentEventKind.DENY_ACCESS))
    assert consent_state_hash(a) != consent_state_hash(b)
    other_expert = initial_state("h2", "org-1")
    assert consent_state_hash(a) != consent_state_hash(other_expert)


def test_apply_event_syncs_all_replicas_and_anchors_per_org():
    anchors = []
    registry = ConsentRegistry(ORGS, anchor_sink=anchors.append)
    registry.init_consent("h1", "org-1")
    registry.apply_event("h1", "org-1", _event(ConsentEventKind.GRANT_ACQUISITION))
    replicas = registry.replicas_of("h1", "org-1")
    hashes = {consent_state_hash(s).hex for s in replicas.values()}
    assert len(hashes) == 1
    assert len(anchors) == len(ORGS)
    assert {tx.payload["org_id"] for tx in anchors} == set(ORGS)
    assert len({tx.payload["consent_hash"] for tx in anchors}) == 1


def test_replica_agreement_across_event_sequences():
    registry = ConsentRegistry(ORGS)
    registry.init_consent("h1", "org-1")
    sequence = [
        ConsentEventKind.GRANT_ACQUISITION,
        ConsentEventKind.GRANT_ACCESS,
        ConsentEventKind.REQUEST_WITHDRAWAL,
        ConsentEventKind.PROCESS_WITHDRAWAL,
    ]
    for ts, kind in enumerate(sequence, start=1):
        registry.apply_event("h1", "org-1", _event(kind, ts))
        hashes = {
            consent_state_hash(s).hex for s in registry.replicas_of("h1", "org-1").values()
        }
        assert len(hashes) == 1


def test_has_processed_withdrawal():
    registry = ConsentRegistry(ORGS)
    registry.init_consent("h1", "org-1")
    registry.init_consent("h2", "org-2")
    assert not registry.has_processed_withdrawal("h1")
    registry.apply_event("h1", "org-1", _event(ConsentEventKind.REQUEST_WITHDRAWAL, 1))
    registry.apply_event("h1", "org-1", _event(ConsentEventKind.PROCESS_WITHDRAWAL, 2))
    assert registry.has_processed_withdrawal("h1")
    assert not registry.has_processed_withdrawal("h2")
    # explicit invalidation is not a withdrawal trail
    registry.apply_event("h2", "org-2", _event(ConsentEventKind.INVALIDATE, 3))
    assert not registry.has_processed_withdrawal("h2")
