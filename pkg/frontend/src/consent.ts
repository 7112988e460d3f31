// Consent panel logic: buttons are enabled exactly for the transitions the
// gateway reports as legal, so the client never re-derives the state table.

import type { ConsentEventKind, ConsentStateView } from "./types.js";
import { CONSENT_EVENT_KINDS } from "./types.js";

export interface ConsentButton {
  kind: ConsentEventKind;
  enabled: boolean;
}

export function consentButtons(state: ConsentStateView): ConsentButton[] {
  const legal = new Set(state.legal_events);
  return CONSENT_EVENT_KINDS.map((kind) => ({ kind, enabled: legal.has(kind) }));
}

export function describeState(state: ConsentStateView): string {
  return (
    `acquisition: ${state.acquisition} · withdrawal: ${state.withdrawal} · ` +
    `access: ${state.access}`
  );
}

export function renderConsentPanel(states: ConsentStateView[]): string {
  return states
    .map((state) => {
      const buttons = consentButtons(state)
        .map(
          (b) =>
            `<button class="consent-event" data-kind="${b.kind}"` +
            `${b.enabled ? "" : " disabled"}>${b.kind}</button>`,
        )
        .join("");
      return (
        `<section class="consent-state" data-org="${state.org_id}">` +
        `<h3>${state.expert_id} @ ${state.org_id}</h3>` +
        `<p>${describeState(state)}</p>` +
        `<div class="consent-actions">${buttons}</div>` +
        `</section>`
      );
    })
    .join("");
}
