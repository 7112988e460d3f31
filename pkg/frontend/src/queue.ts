// Review-queue view state: entropy-descending ordering, optimistic removal
// on submit with rollback when the gateway rejects the decision.

import type { GatewayClient } from "./api.js";
import { GatewayError } from "./api.js";
import type { ReviewItem } from "./types.js";

export function sortQueue(items: ReviewItem[]): ReviewItem[] {
  return [...items]
    .filter((item) => item.status === "pending")
    .sort((a, b) => b.entropy - a.entropy || a.case_id.localeCompare(b.case_id));
}

export interface DecisionResult {
  ok: boolean;
  errorCode?: string;
  errorMessage?: string;
}

export class QueueController {
  private items: ReviewItem[] = [];

  constructor(private readonly client: GatewayClient) {}

  get view(): ReviewItem[] {
    return this.items;
  }

  async refresh(): Promise<ReviewItem[]> {
    this.items = sortQueue(await this.client.loadQueue());
    return this.items;
  }

  /** Remove the item immediately; restore it in place if the POST fails. */
  async submitDecision(caseId: string, decision: "Fund" | "Reject"): Promise<DecisionResult> {
    const index = this.items.findIndex((item) => item.case_id === caseId);
    if (index < 0) {
      return { ok: false, errorCode: "UnknownCase", errorMessage: `no pending item ${caseId}` };
    }
    const [removed] = this.items.splice(index, 1);
    try {
      await this.client.submitDecision(caseId, decision);
      return { ok: true };
    } catch (error) {
      if (error instanceof GatewayError && error.code === "CaseNotPending") {
        // decided elsewhere: stay removed, surface the reason
        return { ok: false, errorCode: error.code, errorMessage: error.message };
      }
      this.items.splice(index, 0, removed);
      this.items = sortQueue(this.items);
      const code = error instanceof GatewayError ? error.code : "NetworkError";
      const message = error instanceof Error ? error.message : String(error);
      return { ok: false, errorCode: code, errorMessage: message };
    }
  }
}

export function entropyBand(entropy: number, threshold = 0.8): "auto" | "review" {
  return entropy <= threshold ? "auto" : "review";
}
