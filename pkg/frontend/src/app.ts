// Single-page wiring: login, review queue, explanation view, consent and
// audit panels. All state lives in the gateway; this file only renders
// payloads and forwards actions.

import { GatewayClient, GatewayError } from "./api.js";
import { renderAuditReport, renderVerdict } from "./audit.js";
import { renderConsentPanel } from "./consent.js";
import { renderExplanation } from "./explanation.js";
import { QueueController, entropyBand } from "./queue.js";
import type { ReviewItem } from "./types.js";

const client = new GatewayClient("");
const queue = new QueueController(client);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function banner(message: string, kind: "info" | "error" = "info"): void {
  const box = el<HTMLDivElement>("banner");
  box.textContent = message;
  box.className = `banner ${kind}`;
  box.hidden = message === "";
}

function renderQueue(items: ReviewItem[]): void {
  const list = el<HTMLDivElement>("queue-list");
  if (items.length === 0) {
    list.innerHTML = `<p class="empty">No cases waiting for review.</p>`;
    return;
  }
  list.innerHTML = items
    .map((item) => {
      const band = entropyBand(item.entropy);
      return (
        `<div class="queue-item" data-case="${item.case_id}">` +
        `<span class="entropy-badge ${band === "auto" ? "auto" : "review"}">` +
        `${item.entropy.toFixed(3)}</span>` +
        `<strong>${item.case_id}</strong> · ${item.customer_id} · ` +
        `fund ${item.distribution.p_fund.toFixed(2)} / ` +
        `reject ${item.distribution.p_reject.toFixed(2)} ` +
        `<button data-action="explain" data-case="${item.case_id}">explain</button>` +
        `<button data-action="fund" data-case="${item.case_id}">Fund</button>` +
        `<button data-action="reject" data-case="${item.case_id}">Reject</button>` +
        `</div>`
      );
    })
    .join("");
}

async function refreshQueue(): Promise<void> {
  try {
    renderQueue(await queue.refresh());
    banner("");
  } catch (error) {
    banner(`queue unavailable: ${(error as Error).message}`, "error");
  }
}

async function decide(caseId: string, decision: "Fund" | "Reject"): Promise<void> {
  renderQueue(queue.view.filter((i) => i.case_id !== caseId)); // optimistic
  const result = await queue.submitDecision(caseId, decision);
  renderQueue(queue.view);
  if (!result.ok) {
    banner(`${result.errorCode}: ${result.errorMessage}`, "error");
  } else {
    banner(`${caseId} decided: ${decision}`);
  }
}

async function explain(caseId: string): Promise<void> {
  try {
    const artifact = await client.getExplanation(caseId);
    el<HTMLDivElement>("explanation-view").innerHTML = renderExplanation(artifact);
  } catch (error) {
    banner(`explanation unavailable: ${(error as Error).message}`, "error");
  }
}

async function loadConsents(): Promise<void> {
  const expertId = el<HTMLInputElement>("consent-expert").value || client.actorId || "";
  try {
    const states = await client.getConsents(expertId);
    el<HTMLDivElement>("consent-view").innerHTML = renderConsentPanel(states);
  } catch (error) {
    banner(`consents unavailable: ${(error as Error).message}`, "error");
  }
}

async function sendConsentEvent(kind: string): Promise<void> {
  const expertId = el<HTMLInputElement>("consent-expert").value || client.actorId || "";
  try {
    await client.sendConsentEvent(expertId, kind as never);
    await loadConsents();
    banner(`${kind} applied for ${expertId}`);
  } catch (error) {
    const code = error instanceof GatewayError ? error.code : "NetworkError";
    banner(`${code}: ${(error as Error).message}`, "error");
  }
}

async function runAudit(kind: "case" | "consent" | "batch"): Promise<void> {
  const target = el<HTMLInputElement>("audit-target").value;
  const view = el<HTMLDivElement>("audit-view");
  try {
    if (kind === "case") {
      view.innerHTML = renderVerdict(await client.auditCase(target));
    } else if (kind === "consent") {
      view.innerHTML = renderVerdict(await client.auditConsent(target));
    } else {
      const fraction = Number(el<HTMLInputElement>("audit-fraction").value || "0");
      view.innerHTML = renderAuditReport(await client.auditBatch(fraction, 0));
    }
    banner("");
  } catch (error) {
    if (error instanceof GatewayError && error.status === 403) {
      view.innerHTML = `<p class="denied">Access denied: the audit panel needs the audit-regulator role.</p>`;
    } else {
      banner(`audit failed: ${(error as Error).message}`, "error");
    }
  }
}

export function wire(): void {
  el<HTMLFormElement>("login-form").addEventListener("submit", (event) => {
    event.preventDefault();
    client.setCredentials({
      actorId: el<HTMLInputElement>("login-actor").value,
      credential: el<HTMLInputElement>("login-credential").value,
    });
    banner(`signed in as ${client.actorId}`);
    void refreshQueue();
  });

  el<HTMLButtonElement>("queue-refresh").addEventListener("click", () => void refreshQueue());
  el<HTMLDivElement>("queue-list").addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const caseId = target.dataset.case;
    if (!caseId) return;
    if (target.dataset.action === "fund") void decide(caseId, "Fund");
    if (target.dataset.action === "reject") void decide(caseId, "Reject");
    if (target.dataset.action === "explain") void explain(caseId);
  });

  el<HTMLButtonElement>("consent-load").addEventListener("click", () => void loadConsents());
  el<HTMLDivElement>("consent-view").addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const kind = target.dataset.kind;
    if (kind && !target.hasAttribute("disabled")) void sendConsentEvent(kind);
  });

  el<HTMLButtonElement>("audit-case").addEventListener("click", () => void runAudit("case"));
  el<HTMLButtonElement>("audit-consent").addEventListener("click", () => void runAudit("consent"));
  el<HTMLButtonElement>("audit-batch").addEventListener("click", () => void runAudit("batch"));
}

if (typeof document !== "undefined" && document.getElementById("login-form")) {
  wire();
}
