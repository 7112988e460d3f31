"""Per-expert, per-organization consent state machine with replicated copies.

Each consent state is a triple: data-acquisition consent, withdrawal status,
and access consent. Every organization holds a replica of every registered
state; an update is applied to all replicas synchronously and each
organization then anchors the digest of its own replica, so replica
divergence afterward is detectable by comparing digests (see audit module).

The state digest deliberately excludes the holding organization and the
update timestamp: replicas of the same state must hash equal when they
agree, regardless of where or when the copy was written.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Callable

from .crypto import Digest, hash_canonical
from .ledger import AnchorTx, TxKind

__all__ = [
    "AcquisitionConsent",
    "WithdrawalConsent",
    "AccessConsent",
    "ConsentEventKind",
    "ConsentEvent",
    "ConsentState",
    "ConsentRegistry",
    "consent_state_hash",
    "apply_transition",
    "legal_events",
    "IllegalTransitionError",
    "AlreadyRegisteredError",
]


class AcquisitionConsent(str, Enum):
    APPROVED = "approved"
    INVALID = "invalid"
    REJECTED = "rejected"
    AWAITING = "awaiting"


class WithdrawalConsent(str, Enum):
    REQUESTED = "requested"
    INVALID = "invalid"
    NOT_REQUESTED = "not_requested"


class AccessConsent(str, Enum):
    AGREED_AND_VALID = "agreed_and_valid"
    INVALID = "invalid"
    NOT_AGREED = "not_agreed"
    AWAITING = "awaiting"


class ConsentEventKind(str, Enum):
    GRANT_ACQUISITION = "GrantAcquisition"
    REJECT_ACQUISITION = "RejectAcquisition"
    REQUEST_WITHDRAWAL = "RequestWithdrawal"
    PROCESS_WITHDRAWAL = "ProcessWithdrawal"
    GRANT_ACCESS = "GrantAccess"
    DENY_ACCESS = "DenyAccess"
    INVALIDATE = "Invalidate"


@dataclass
class ConsentEvent:
    kind: ConsentEventKind
    actor_id: str
    timestamp_ms: int


@dataclass
class ConsentState:
    expert_id: str
    org_id: str
    acquisition: AcquisitionConsent
    withdrawal: WithdrawalConsent
    access: AccessConsent
    updated_ms: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "expert_id": self.expert_id,
            "org_id": self.org_id,
            "acquisition": self.acquisition.value,
            "withdrawal": self.withdrawal.value,
            "access": self.access.value,
            "updated_ms": self.updated_ms,
        }


class IllegalTransitionError(ValueError):
    """Event is not legal from the current consent state."""


class AlreadyRegisteredError(ValueError):
    """Consent pair already initialized."""


def initial_state(expert_id: str, org_id: str, timestamp_ms: int = 0) -> ConsentState:
    return ConsentState(
        expert_id=expert_id,
        org_id=org_id,
        acquisition=AcquisitionConsent.AWAITING,
        withdrawal=WithdrawalConsent.NOT_REQUESTED,
        access=AccessConsent.AWAITING,
        updated_ms=timestamp_ms,
    )


def consent_state_hash(state: ConsentState) -> Digest:
    """Content digest over (expert, acquisition, withdrawal, access) only."""
    return hash_canonical(
        {
            "expert_id": state.expert_id,
            "acquisition": state.acquisition.value,
            "withdrawal": state.withdrawal.value,
            "access": state.access.value,
        }
    )


def apply_transition(state: ConsentState, event: ConsentEvent) -> ConsentState:
    """Pure transition; raises IllegalTransitionError on undefined moves.

    Processing a withdrawal voids both the acquisition and access consents;
    the withdrawal marker itself stays at "requested" as the durable trail
    that erasure was lawful. Invalidate forces all three fields to invalid
    from any state.
    """
    kind = event.kind
    if kind == ConsentEventKind.INVALIDATE:
        new = replace(
            state,
            acquisition=AcquisitionConsent.INVALID,
            withdrawal=WithdrawalConsent.INVALID,
            access=AccessConsent.INVALID,
        )
    elif kind == ConsentEventKind.GRANT_ACQUISITION:
        if state.acquisition != AcquisitionConsent.AWAITING:
            raise IllegalTransitionError(f"{kind.value} from acquisition={state.acquisition.value}")
        new = replace(state, acquisition=AcquisitionConsent.APPROVED)
    elif kind == ConsentEventKind.REJECT_ACQUISITION:
        if state.acquisition != AcquisitionConsent.AWAITING:
            raise IllegalTransitionError(f"{kind.value} from acquisition={state.acquisition.value}")
        new = replace(state, acquisition=AcquisitionConsent.REJECTED)
    elif kind == ConsentEventKind.GRANT_ACCESS:
        if state.access != AccessConsent.AWAITING:
            raise IllegalTransitionError(f"{kind.value} from access={state.access.value}")
        new = replace(state, access=AccessConsent.AGREED_AND_VALID)
    elif kind == ConsentEventKind.DENY_ACCESS:
        if state.access != AccessConsent.AWAITING:
            raise IllegalTransitionError(f"{kind.value} from access={state.access.value}")
        new = replace(state, access=AccessConsent.NOT_AGREED)
    elif kind == ConsentEventKind.REQUEST_WITHDRAWAL:
        if state.withdrawal != WithdrawalConsent.NOT_REQUESTED:
            raise IllegalTransitionError(f"{kind.value} from withdrawal={state.withdrawal.value}")
        new = replace(state, withdrawal=WithdrawalConsent.REQUESTED)
    elif kind == ConsentEventKind.PROCESS_WITHDRAWAL:
        if state.withdrawal != WithdrawalConsent.REQUESTED:
            raise IllegalTransitionError(f"{kind.value} from withdrawal={state.withdrawal.value}")
        new = replace(
            state,
            acquisition=AcquisitionConsent.INVALID,
            access=AccessConsent.INVALID,
        )
    else:  # pragma: no cover - enum is closed
        raise IllegalTransitionError(f"unknown event kind: {kind}")
    new.updated_ms = event.timestamp_ms
    return new


def legal_events(state: ConsentState) -> list[ConsentEventKind]:
    """Event kinds applicable from this state (used by UI button gating)."""
    kinds = [ConsentEventKind.INVALIDATE]
    if state.acquisition == AcquisitionConsent.AWAITING:
        kinds += [ConsentEventKind.GRANT_ACQUISITION, ConsentEventKind.REJECT_ACQUISITION]
    if state.access == AccessConsent.AWAITING:
        kinds += [ConsentEventKind.GRANT_ACCESS, ConsentEventKind.DENY_ACCESS]
    if state.withdrawal == WithdrawalConsent.NOT_REQUESTED:
        kinds.append(ConsentEventKind.REQUEST_WITHDRAWAL)
    if state.withdrawal == WithdrawalConsent.REQUESTED:
        kinds.append(ConsentEventKind.PROCESS_WITHDRAWAL)
    return kinds


class ConsentRegistry:
    """Replicated consent states for a fixed set of organizations.

    Per-expert updates are serialized; every update rewrites all replicas
    before anchors are pushed, so anchored digests only diverge when a
    replica is mutated behind the registry's back.
    """

    def __init__(
        self,
        org_ids: list[str],
        anchor_sink: Callable[[AnchorTx], None] | None = None,
    ):
        if not org_ids:
            raise ValueError("at least one organization required")
        self.org_ids = list(org_ids)
        self._anchor_sink = anchor_sink
        self._lock = threading.Lock()
        # replica org -> (expert_id, subject org) -> state copy
        self._replicas: dict[str, dict[tuple[str, str], ConsentState]] = {
            org: {} for org in self.org_ids
        }

    def pairs(self) -> list[tuple[str, str]]:
        first = self._replicas[self.org_ids[0]]
        return sorted(first.keys())

    def pairs_for(self, expert_id: str) -> list[tuple[str, str]]:
        return [p for p in self.pairs() if p[0] == expert_id]

    def init_consent(self, expert_id: str, org_id: str, timestamp_ms: int = 0) -> ConsentState:
        if org_id not in self._replicas:
            raise KeyError(f"unknown org: {org_id}")
        pair = (expert_id, org_id)
        with self._lock:
            if pair in self._replicas[self.org_ids[0]]:
                raise AlreadyRegisteredError(f"{expert_id}@{org_id}")
            state = initial_state(expert_id, org_id, timestamp_ms)
            for org in self.org_ids:
                self._replicas[org][pair] = replace(state)
        return state

    def get_state(self, expert_id: str, org_id: str, at_org: str | None = None) -> ConsentState:
        replica = self._replicas[at_org or self.org_ids[0]]
        state = replica.get((expert_id, org_id))
        if state is None:
            raise KeyError(f"no consent state for {expert_id}@{org_id}")
        return state

    def replicas_of(self, expert_id: str, org_id: str) -> dict[str, ConsentState]:
        """Live replica objects per holding org; mutating one simulates tampering."""
        pair = (expert_id, org_id)
        out = {}
        for org in self.org_ids:
            state = self._replicas[org].get(pair)
            if state is None:
                raise KeyError(f"no consent state for {expert_id}@{org_id}")
            out[org] = state
        return out

    def apply_event(self, expert_id: str, org_id: str, event: ConsentEvent) -> ConsentState:
        """Transition the pair's state, sync all replicas, anchor per org."""
        pair = (expert_id, org_id)
        with self._lock:
            current = self._replicas[self.org_ids[0]].get(pair)
            if current is None:
                raise KeyError(f"no consent state for {expert_id}@{org_id}")
            new = apply_transition(current, event)
            # keep anchors unique even when events share a timestamp
            new.updated_ms = max(event.timestamp_ms, current.updated_ms + 1)
            for org in self.org_ids:
                self._replicas[org][pair] = replace(new)
            if self._anchor_sink is not None:
                digest = consent_state_hash(new)
                for org in self.org_ids:
                    tx = AnchorTx.create(
                        TxKind.CONSENT,
                        {
                            "expert_id": expert_id,
                            "org_id": org,
                            "consent_hash": digest.hex,
                            "timestamp_ms": new.updated_ms,
                        },
                        submitter_org=org,
                        submit_time=new.updated_ms,
                    )
                    self._anchor_sink(tx)
        return new

    def snapshot_all(self, org_id: str) -> list[ConsentState]:
        """The org's full replica: a copy of every registered state."""
        replica = self._replicas.get(org_id)
        if replica is None:
            raise KeyError(f"unknown org: {org_id}")
        return [replace(s) for _, s in sorted(replica.items())]

    def has_processed_withdrawal(self, subject_id: str) -> bool:
        """True when any of the subject's states shows a processed withdrawal."""
        replica = self._replicas[self.org_ids[0]]
        for (expert_id, _org), state in replica.items():
            if (
                expert_id == subject_id
                and state.withdrawal == WithdrawalConsent.REQUESTED
                and state.acquisition == AcquisitionConsent.INVALID
                and state.access == AccessConsent.INVALID
            ):
                return True
        return False
