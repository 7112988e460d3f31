"""HTTP gateway wiring the full pipeline: decide, explain, anchor, review, audit.

The service layer owns all state: the key vault, the off-chain store, the
ledger, replicated consent states, the live model snapshot, the review
queue, and the annotation buffer feeding the next retrain. The FastAPI app
is a thin role-checked shell over it. Every processed application stores
an encrypted artifact off-chain and commits the matching anchor before the
case is returned, so there is never a decided case without a chain record.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .audit import AuditReport, Auditor, TamperVerdict
from .canonical import canonical_deserialize
from .consent import (
    ConsentEvent,
    ConsentEventKind,
    ConsentRegistry,
    ConsentState,
    IllegalTransitionError,
    legal_events,
)
from .crypto import Digest, KeyVault, sha256
from .explain import LrpParams, build_artifact, lime, lrp, shap_attr
from .hitl import (
    DEFAULT_REVIEW_THRESHOLD,
    IterationRecord,
    ReviewItem,
    Route,
    entropy_of,
    route as route_entropy,
)
from .ledger import AnchorTx, Ledger, NetworkConfig, PerfReport, TxKind
from .model import (
    DEFAULT_SCHEMA,
    FUND,
    LABELS,
    REJECT,
    Dataset,
    DecisionDistribution,
    Hyperparams,
    LoanApplication,
    LoanModel,
    Schema,
    cross_validate,
    encode_application,
)
from .store import FileStore, MemoryStore, OffchainStore, StoreKey, explanation_record_id

__all__ = [
    "ActorRole",
    "ActorPrincipal",
    "ApplicationCase",
    "GatewayConfig",
    "DecisionService",
    "GatewayError",
    "create_app",
    "bootstrap_demo",
]

DEFAULT_ORGS = ("org-1", "org-2", "org-3", "org-4")


class GatewayError(Exception):
    """Service-level failure with a machine-readable code and HTTP status."""

    def __init__(self, code: str, message: str, status: int):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status = status


def _err(code: str, message: str, status: int) -> GatewayError:
    return GatewayError(code, message, status)


class ActorRole(str, Enum):
    EXPERT = "expert"
    DEVELOPER = "developer"
    AUDIT_REGULATOR = "audit_regulator"
    CUSTOMER = "customer"


@dataclass
class ActorPrincipal:
    actor_id: str
    role: ActorRole
    org_id: str
    credential_hash: Digest

    def to_dict(self) -> dict[str, Any]:
        return {
            "actor_id": self.actor_id,
            "role": self.role.value,
            "org_id": self.org_id,
            "credential_hash": self.credential_hash.hex,
        }


@dataclass
class ApplicationCase:
    case_id: str
    customer_id: str
    timestamp_ms: int
    attributes: dict[str, str]
    distribution: DecisionDistribution
    entropy: float
    route: Route
    artifact_hash: Digest
    status: str  # auto_decided | awaiting_review | reviewed
    decision: str
    expert_decision: str | None = None
    expert_id: str | None = None
    decided_ms: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "customer_id": self.customer_id,
            "timestamp_ms": self.timestamp_ms,
            "attributes": self.attributes,
            "distribution": self.distribution.to_dict(),
            "entropy": self.entropy,
            "route": self.route.value,
            "artifact_hash": self.artifact_hash.hex,
            "status": self.status,
            "decision": self.decision,
            "expert_decision": self.expert_decision,
            "expert_id": self.expert_id,
            "decided_ms": self.decided_ms,
        }


@dataclass
class GatewayConfig:
    org_ids: tuple[str, ...] = DEFAULT_ORGS
    review_threshold: float = DEFAULT_REVIEW_THRESHOLD
    train_epochs: int = 15
    cv_folds: int = 5
    lrp_params: LrpParams = field(default_factory=lambda: LrpParams("lrp_gamma"))
    shap_samples: int = 24
    lime_samples: int = 120
    store_dir: str | None = None
    seed: int = 0

    @property
    def primary_org(self) -> str:
        return self.org_ids[0]


class DecisionService:
    """Everything behind the HTTP surface, usable directly in-process."""

    def __init__(self, config: GatewayConfig | None = None, schema: Schema | None = None,
                 hyper: Hyperparams | None = None, clock=None):
        self.config = config or GatewayConfig()
        self.schema = schema or DEFAULT_SCHEMA
        self.hyper = hyper or Hyperparams()
        self._clock = clock or (lambda: int(time.time() * 1000))
        self._last_ms = 0
        self._ms_lock = threading.Lock()

        self.vault = KeyVault()
        for org in self.config.org_ids:
            self.vault.register_org(org)
        if self.config.store_dir is not None:
            self.store: OffchainStore = FileStore(self.vault, Path(self.config.store_dir))
        else:
            self.store = MemoryStore(self.vault)
        self.ledger = Ledger(NetworkConfig(org_count=len(self.config.org_ids)),
                             seed=self.config.seed)
        self.consents = ConsentRegistry(list(self.config.org_ids), anchor_sink=self._anchor)
        self.auditor = Auditor(self.store, self.ledger, self.vault, self.consents)

        self.actors: dict[str, ActorPrincipal] = {}
        self.cases: dict[str, ApplicationCase] = {}
        self.review_queue: dict[str, ReviewItem] = {}
        self._case_seq = 0
        self._case_lock = threading.Lock()

        self.model: LoanModel | None = None
        self._model_lock = threading.Lock()
        self.labeled: Dataset | None = None
        self.annotation_buffer: list[tuple[np.ndarray, int]] = []
        self.iteration = 0

    # -- plumbing ------------------------------------------------------------

    def _now_ms(self) -> int:
        with self._ms_lock:
            now = max(self._clock(), self._last_ms + 1)
            self._last_ms = now
            return now

    def _anchor(self, tx: AnchorTx) -> None:
        self.ledger.submit_tx(tx)
        self.ledger.run_ordering()

    def _background_vector(self) -> np.ndarray:
        if self.labeled is not None:
            return self.labeled.features.mean(axis=0)
        return np.full(self.schema.feature_count, 1.0 / self.schema.feature_count)

    # -- actors ----------------------------------------------------------------

    def register_actor(self, actor_id: str, role: ActorRole, org_id: str, credential: str) -> ActorPrincipal:
        if actor_id in self.actors:
            raise _err("ActorExists", f"actor already registered: {actor_id}", 409)
        if org_id not in self.config.org_ids:
            raise _err("UnknownOrg", f"unknown org: {org_id}", 400)
        credential_hash = sha256(credential.encode())
        principal = ActorPrincipal(actor_id, role, org_id, credential_hash)
        now = self._now_ms()
        # identity document kept encrypted off-chain; only its digest goes on chain
        self.store.store_explanation_pair(
            actor_id, now, credential.encode(), org_id, namespace="identities"
        )
        self._anchor(AnchorTx.create(
            TxKind.ACTOR_CREDENTIAL,
            {
                "actor_id": actor_id,
                "role": role.value,
                "org_id": org_id,
                "credential_hash": credential_hash.hex,
                "timestamp_ms": now,
            },
            submitter_org=org_id,
            submit_time=now,
        ))
        self.actors[actor_id] = principal
        if role == ActorRole.EXPERT:
            self.consents.init_consent(actor_id, org_id, now)
        return principal

    def authenticate(self, actor_id: str | None, credential: str | None) -> ActorPrincipal:
        if not actor_id or credential is None:
            raise _err("Unauthenticated", "missing actor credentials", 401)
        principal = self.actors.get(actor_id)
        if principal is None or sha256(credential.encode()) != principal.credential_hash:
            raise _err("Unauthenticated", "unknown actor or bad credential", 401)
        return principal

    def _require_role(self, principal: ActorPrincipal, *roles: ActorRole) -> None:
        if principal.role not in roles:
            allowed = "/".join(r.value for r in roles)
            raise _err("WrongRole", f"{principal.role.value} may not act here (needs {allowed})", 403)

    # -- model lifecycle ----------------------------------------------------------

    def install_model(self, model: LoanModel, labeled: Dataset | None) -> Digest:
        """Swap the serving snapshot atomically and anchor its configuration."""
        digest = model.config_hash()
        now = self._now_ms()
        self.store.store_explanation_pair(
            "model", now, model.save_bytes(), self.config.primary_org, namespace="model_configs"
        )
        self._anchor(AnchorTx.create(
            TxKind.MODEL_CONFIG,
            {"config_hash": digest.hex, "timestamp_ms": now, "iteration": self.iteration},
            submitter_org=self.config.primary_org,
            submit_time=now,
        ))
        with self._model_lock:
            self.model = model
            self.labeled = labeled
        return digest

    def train_initial_model(self, data: Dataset, epochs: int | None = None, seed: int | None = None) -> Digest:
        seed = self.config.seed if seed is None else seed
        model = LoanModel(self.hyper, seed=seed)
        model.train(data, epochs=epochs or self.config.train_epochs, seed=seed)
        return self.install_model(model, data)

    # -- application pipeline --------------------------------------------------------

    def process_application(self, principal: ActorPrincipal, app: LoanApplication) -> ApplicationCase:
        self._require_role(principal, ActorRole.CUSTOMER)
        if principal.actor_id != app.customer_id:
            raise _err("WrongRole", "customers may only submit their own applications", 403)
        model = self.model
        labeled = self.labeled
        if model is None:
            raise _err("ModelUnavailable", "no trained model installed", 503)
        try:
            features = encode_application(app, self.schema)
        except Exception as exc:
            raise _err("BadApplication", str(exc), 400) from exc

        now = self._now_ms()
        dist = model.decide(features)
        entropy = entropy_of(dist)
        outcome = route_entropy(entropy, self.config.review_threshold)
        background = self._background_vector()
        target = dist.decision
        maps = [
            lrp(model, features, target, self.config.lrp_params, schema=self.schema),
            shap_attr(model, features, background, self.schema, target=target,
                      mode="sampled", n_samples=self.config.shap_samples, seed=self.config.seed),
            lime(model, features, background, self.schema, target=target,
                 n_perturbations=self.config.lime_samples, seed=self.config.seed),
        ]
        decision_block = {**dist.to_dict(), "decision": target}
        _, artifact_bytes = build_artifact(
            app.customer_id, now, decision_block, entropy, outcome.route.value, maps, self.schema
        )
        _, anchor = self.store.store_explanation_pair(
            app.customer_id, now, artifact_bytes, principal.org_id
        )
        self._anchor(AnchorTx.create(
            TxKind.EXPLANATION, anchor.to_dict(), submitter_org=principal.org_id, submit_time=now
        ))

        with self._case_lock:
            self._case_seq += 1
            case_id = f"case-{self._case_seq:06d}"
        status = "auto_decided" if outcome.route == Route.AUTO_DECIDE else "awaiting_review"
        case = ApplicationCase(
            case_id=case_id,
            customer_id=app.customer_id,
            timestamp_ms=now,
            attributes=dict(app.attributes),
            distribution=dist,
            entropy=entropy,
            route=outcome.route,
            artifact_hash=anchor.explanation_hash,
            status=status,
            decision=target,
        )
        self.cases[case_id] = case
        if status == "awaiting_review":
            self.review_queue[case_id] = ReviewItem(
                case_id=case_id,
                customer_id=app.customer_id,
                distribution=dist,
                entropy=entropy,
                artifact_hash=anchor.explanation_hash,
            )
        return case

    def get_case(self, case_id: str) -> ApplicationCase:
        case = self.cases.get(case_id)
        if case is None:
            raise _err("UnknownCase", f"no case {case_id}", 404)
        return case

    def explanation_bytes(self, case_id: str) -> bytes:
        """The artifact exactly as stored: fetched off-chain and decrypted."""
        case = self.get_case(case_id)
        key = StoreKey("explanations", explanation_record_id(case.customer_id, case.timestamp_ms))
        record = self.store.get(key)
        if record is None:
            raise _err("RecordMissing", f"off-chain record gone for {case_id}", 404)
        return self.vault.decrypt_record(record.payload, record.payload.key_owner)

    def explanation_value(self, case_id: str) -> dict[str, Any]:
        return canonical_deserialize(self.explanation_bytes(case_id))

    # -- review queue ----------------------------------------------------------------

    def queue_view(self) -> list[ReviewItem]:
        pending = [i for i in self.review_queue.values() if i.status == "pending"]
        return sorted(pending, key=lambda i: (-i.entropy, i.case_id))

    def submit_review_decision(self, principal: ActorPrincipal, case_id: str, decision: str) -> ApplicationCase:
        self._require_role(principal, ActorRole.EXPERT)
        if decision not in (FUND, REJECT):
            raise _err("BadDecision", f"decision must be {FUND} or {REJECT}", 400)
        case = self.get_case(case_id)
        if case.status != "awaiting_review":
            raise _err("CaseNotPending", f"case {case_id} is {case.status}", 409)
        now = self._now_ms()
        case.status = "reviewed"
        case.expert_decision = decision
        case.expert_id = principal.actor_id
        case.decided_ms = now
        item = self.review_queue.get(case_id)
        if item is not None:
            item.status = "decided"
            item.expert_decision = decision
            item.expert_id = principal.actor_id
            item.decided_ms = now
        features = encode_application(
            LoanApplication(case.customer_id, case.attributes), self.schema
        )
        self.annotation_buffer.append((features, LABELS.index(decision)))
        # the annotation itself is an anchored expert contribution
        note = f"{case_id}:{decision}".encode()
        _, anchor = self.store.store_explanation_pair(
            principal.actor_id, now, note, principal.org_id, namespace="expert_contributions"
        )
        self._anchor(AnchorTx.create(
            TxKind.EXPLANATION, anchor.to_dict(), submitter_org=principal.org_id, submit_time=now
        ))
        return case

    # -- retraining ---------------------------------------------------------------------

    def trigger_retrain(self, principal: ActorPrincipal) -> IterationRecord:
        self._require_role(principal, ActorRole.DEVELOPER)
        if not self.annotation_buffer:
            raise _err("EmptyBuffer", "no annotations pending", 409)
        if self.labeled is None:
            raise _err("ModelUnavailable", "no training corpus installed", 503)
        buffer = Dataset(
            np.stack([f for f, _ in self.annotation_buffer]),
            np.array([l for _, l in self.annotation_buffer], dtype=int),
        )
        new_labeled = self.labeled.concat(buffer)
        self.iteration += 1
        seed = self.config.seed + 31 * self.iteration
        model = LoanModel(self.hyper, seed=seed)
        model.train(new_labeled, epochs=self.config.train_epochs, seed=seed)
        digest = self.install_model(model, new_labeled)
        added = len(buffer)
        self.annotation_buffer.clear()
        mean_auc, fold_aucs = cross_validate(
            new_labeled, self.hyper, folds=self.config.cv_folds,
            seed=seed, epochs=self.config.train_epochs,
        )
        return IterationRecord(
            iteration=self.iteration,
            annotated_added=added,
            labeled_size=len(new_labeled),
            mean_auc=mean_auc,
            fold_aucs=fold_aucs,
            config_hash=digest.hex,
        )

    # -- consents ---------------------------------------------------------------------------

    def consent_state(self, expert_id: str) -> list[ConsentState]:
        pairs = self.consents.pairs_for(expert_id)
        if not pairs:
            raise _err("UnknownExpert", f"no consent states for {expert_id}", 404)
        return [self.consents.get_state(e, o) for e, o in pairs]

    def consent_event(self, principal: ActorPrincipal, expert_id: str, kind: ConsentEventKind) -> ConsentState:
        if kind == ConsentEventKind.INVALIDATE:
            if principal.role != ActorRole.DEVELOPER and principal.actor_id != expert_id:
                raise _err("WrongRole", "only the expert or a developer may invalidate", 403)
        elif principal.actor_id != expert_id or principal.role != ActorRole.EXPERT:
            raise _err("WrongRole", "experts manage their own consent", 403)
        pairs = self.consents.pairs_for(expert_id)
        if not pairs:
            raise _err("UnknownExpert", f"no consent states for {expert_id}", 404)
        now = self._now_ms()
        event = ConsentEvent(kind=kind, actor_id=principal.actor_id, timestamp_ms=now)
        try:
            state = self.consents.apply_event(pairs[0][0], pairs[0][1], event)
        except IllegalTransitionError as exc:
            raise _err("IllegalTransition", str(exc), 409) from exc
        if kind == ConsentEventKind.PROCESS_WITHDRAWAL:
            self._erase_contributions(expert_id)
        return state

    def _erase_contributions(self, expert_id: str) -> None:
        for record_id in self.store.keys("expert_contributions"):
            if record_id.startswith(f"{expert_id}_"):
                self.store.delete(StoreKey("expert_contributions", record_id))

    # -- audits ------------------------------------------------------------------------------

    def audit_case(self, principal: ActorPrincipal, case_id: str) -> TamperVerdict:
        self._require_role(principal, ActorRole.AUDIT_REGULATOR)
        case = self.get_case(case_id)
        return self.auditor.audit_explanation(case.customer_id, case.timestamp_ms)

    def audit_consent(self, principal: ActorPrincipal, expert_id: str) -> TamperVerdict:
        self._require_role(principal, ActorRole.AUDIT_REGULATOR)
        return self.auditor.audit_consent(expert_id)

    def audit_batch(self, principal: ActorPrincipal, tamper_fraction: float, seed: int,
                    file_count: int | None = None) -> AuditReport:
        self._require_role(principal, ActorRole.AUDIT_REGULATOR)
        available = len(self.store.keys("explanations"))
        return self.auditor.batch_audit_experiment(
            file_count if file_count is not None else available, tamper_fraction, seed
        )

    # -- metrics ------------------------------------------------------------------------------

    def ledger_metrics(self) -> PerfReport:
        return self.ledger.perf_report()


def bootstrap_demo(service: DecisionService, seed: int = 0, samples: int = 600,
                   epochs: int | None = None) -> dict[str, str]:
    """Populate a runnable demo world: actors, consents, and a trained model.

    Returns the registered actor credentials (actor id -> secret).
    """
    from .hitl import synth_dataset

    creds: dict[str, str] = {}

    def add(actor_id: str, role: ActorRole, org: str) -> None:
        secret = f"{actor_id}-secret"
        service.register_actor(actor_id, role, org, secret)
        creds[actor_id] = secret

    orgs = service.config.org_ids
    for o, org in enumerate(orgs):
        for e in range(3):
            add(f"expert-{o + 1}-{e + 1}", ActorRole.EXPERT, org)
    add("dev-1", ActorRole.DEVELOPER, orgs[0])
    add("auditor-1", ActorRole.AUDIT_REGULATOR, orgs[0])
    for c in range(1, 4):
        add(f"customer-{c}", ActorRole.CUSTOMER, orgs[(c - 1) % len(orgs)])

    for expert_id, _ in [(a, r) for a, r in creds.items() if a.startswith("expert-")]:
        principal = service.actors[expert_id]
        service.consent_event(principal, expert_id, ConsentEventKind.GRANT_ACQUISITION)
        service.consent_event(principal, expert_id, ConsentEventKind.GRANT_ACCESS)

    data = synth_dataset(n=samples, seed=seed)
    service.train_initial_model(data, epochs=epochs, seed=seed)
    return creds


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

from pydantic import BaseModel


class ApplicationBody(BaseModel):
    customer_id: str
    attributes: dict[str, str]


class DecisionBody(BaseModel):
    decision: str


class ConsentEventBody(BaseModel):
    kind: str


class RegisterBody(BaseModel):
    actor_id: str
    role: str
    org_id: str
    credential: str


class BatchAuditBody(BaseModel):
    tamper_fraction: float = 0.0
    seed: int = 0
    file_count: int | None = None


def create_app(service: DecisionService):
    from fastapi import FastAPI, Header, Request, Response
    from fastapi.responses import JSONResponse

    app = FastAPI(title="trustboost gateway")
    app.state.service = service

    @app.exception_handler(GatewayError)
    async def gateway_error_handler(_request: Request, exc: GatewayError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    def principal_from(actor_id: str | None, credential: str | None) -> ActorPrincipal:
        return service.authenticate(actor_id, credential)

    @app.post("/actors", status_code=201)
    def register_actor(body: RegisterBody):
        try:
            role = ActorRole(body.role)
        except ValueError:
            raise _err("BadRole", f"unknown role: {body.role}", 400)
        return service.register_actor(body.actor_id, role, body.org_id, body.credential).to_dict()

    @app.get("/actors/{actor_id}")
    def get_actor(actor_id: str):
        principal = service.actors.get(actor_id)
        if principal is None:
            raise _err("UnknownActor", f"no actor {actor_id}", 404)
        return principal.to_dict()

    @app.post("/applications", status_code=201)
    def submit_application(
        body: ApplicationBody,
        x_actor_id: str | None = Header(default=None),
        x_credential: str | None = Header(default=None),
    ):
        principal = principal_from(x_actor_id, x_credential)
        case = service.process_application(principal, LoanApplication(body.customer_id, body.attributes))
        return case.to_dict()

    @app.get("/applications/{case_id}")
    def get_application(case_id: str):
        return service.get_case(case_id).to_dict()

    @app.get("/applications/{case_id}/explanation")
    def get_explanation(case_id: str):
        data = service.explanation_bytes(case_id)
        return Response(content=data, media_type="application/json")

    @app.get("/applications/{case_id}/explanation.svg")
    def get_explanation_svg(case_id: str):
        from .render import render_artifact_svg

        artifact = service.explanation_value(case_id)
        return Response(content=render_artifact_svg(artifact), media_type="image/svg+xml")

    @app.get("/review-queue")
    def review_queue():
        return [item.to_dict() for item in service.queue_view()]

    @app.post("/review-queue/{case_id}/decision")
    def review_decision(
        case_id: str,
        body: DecisionBody,
        x_actor_id: str | None = Header(default=None),
        x_credential: str | None = Header(default=None),
    ):
        principal = principal_from(x_actor_id, x_credential)
        return service.submit_review_decision(principal, case_id, body.decision).to_dict()

    @app.get("/consents/{expert_id}")
    def get_consents(expert_id: str):
        states = service.consent_state(expert_id)
        return [
            {**s.to_dict(), "legal_events": [k.value for k in legal_events(s)]}
            for s in states
        ]

    @app.post("/consents/{expert_id}/events")
    def post_consent_event(
        expert_id: str,
        body: ConsentEventBody,
        x_actor_id: str | None = Header(default=None),
        x_credential: str | None = Header(default=None),
    ):
        principal = principal_from(x_actor_id, x_credential)
        try:
            kind = ConsentEventKind(body.kind)
        except ValueError:
            raise _err("BadEvent", f"unknown event kind: {body.kind}", 400)
        state = service.consent_event(principal, expert_id, kind)
        return {**state.to_dict(), "legal_events": [k.value for k in legal_events(state)]}

    @app.post("/audits/explanations/{case_id}")
    def audit_explanation(
        case_id: str,
        x_actor_id: str | None = Header(default=None),
        x_credential: str | None = Header(default=None),
    ):
        principal = principal_from(x_actor_id, x_credential)
        return service.audit_case(principal, case_id).to_dict()

    @app.post("/audits/consents/{expert_id}")
    def audit_consent(
        expert_id: str,
        x_actor_id: str | None = Header(default=None),
        x_credential: str | None = Header(default=None),
    ):
        principal = principal_from(x_actor_id, x_credential)
        return service.audit_consent(principal, expert_id).to_dict()

    @app.post("/audits/batch")
    def audit_batch(
        body: BatchAuditBody,
        x_actor_id: str | None = Header(default=None),
        x_credential: str | None = Header(default=None),
    ):
        principal = principal_from(x_actor_id, x_credential)
        report = service.audit_batch(principal, body.tamper_fraction, body.seed, body.file_count)
        return report.to_dict()

    @app.post("/admin/retrain")
    def retrain(
        x_actor_id: str | None = Header(default=None),
        x_credential: str | None = Header(default=None),
    ):
        principal = principal_from(x_actor_id, x_credential)
        return service.trigger_retrain(principal).to_dict()

    @app.get("/metrics/ledger")
    def ledger_metrics():
        try:
            return service.ledger_metrics().to_dict()
        except Exception as exc:
            raise _err("EmptyLedger", str(exc), 409)

    @app.get("/health")
    def health():
        return {"status": "ok", "model_installed": service.model is not None}

    return app
