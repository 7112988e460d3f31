import { describe, expect, it } from "vitest";

import { GatewayClient, GatewayError } from "../src/api.js";
import { renderAuditReport, renderVerdict } from "../src/audit.js";
import { consentButtons, renderConsentPanel } from "../src/consent.js";
import {
  highImportanceAttributes,
  renderExplanation,
  renderRelevanceMap,
} from "../src/explanation.js";
import { QueueController, entropyBand, sortQueue } from "../src/queue.js";
import type {
  ConsentStateView,
  ExplanationArtifact,
  ReviewItem,
} from "../src/types.js";

function item(caseId: string, entropy: number, status: "pending" | "decided" = "pending"): ReviewItem {
  return {
    case_id: caseId,
    customer_id: `cust-${caseId}`,
    distribution: { p_fund: 0.5, p_reject: 0.5 },
    entropy,
    artifact_hash: "ab".repeat(32),
    status,
    expert_decision: null,
    expert_id: null,
    decided_ms: null,
  };
}

type FetchStub = (url: string, init?: RequestInit) => Promise<Response>;

function clientWith(stub: FetchStub): GatewayClient {
  return new GatewayClient("", { actorId: "expert-1", credential: "pw" }, stub as typeof fetch);
}

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("queue ordering", () => {
  it("sorts pending items by entropy descending", () => {
    const sorted = sortQueue([item("b", 0.85), item("a", 0.99), item("c", 0.81)]);
    expect(sorted.map((i) => i.entropy)).toEqual([0.99, 0.85, 0.81]);
  });

  it("drops non-pending items", () => {
    const sorted = sortQueue([item("a", 0.99, "decided"), item("b", 0.9)]);
    expect(sorted.map((i) => i.case_id)).toEqual(["b"]);
  });

  it("breaks entropy ties by case id for a stable view", () => {
    const sorted = sortQueue([item("z", 0.9), item("a", 0.9)]);
    expect(sorted.map((i) => i.case_id)).toEqual(["a", "z"]);
  });
});

describe("entropy badge bands", () => {
  it("mirrors the routing threshold", () => {
    expect(entropyBand(0.8)).toBe("auto");
    expect(entropyBand(0.80001)).toBe("review");
    expect(entropyBand(0.141)).toBe("auto");
    expect(entropyBand(0.997)).toBe("review");
  });
});

describe("optimistic decision flow", () => {
  it("removes the item and keeps it removed on success", async () => {
    const calls: string[] = [];
    const client = clientWith(async (url, init) => {
      calls.push(url);
      if (url === "/review-queue") {
        return jsonResponse(200, [item("a", 0.99), item("b", 0.9)]);
      }
      expect(init?.method).toBe("POST");
      return jsonResponse(200, { case_id: "a", status: "reviewed" });
    });
    const controller = new QueueController(client);
    await controller.refresh();
    const result = await controller.submitDecision("a", "Fund");
    expect(result.ok).toBe(true);
    expect(controller.view.map((i) => i.case_id)).toEqual(["b"]);
    expect(calls).toContain("/review-queue/a/decision");
  });

  it("restores the item when the gateway is unreachable", async () => {
    const client = clientWith(async (url) => {
      if (url === "/review-queue") {
        return jsonResponse(200, [item("a", 0.99), item("b", 0.9)]);
      }
      throw new TypeError("fetch failed");
    });
    const controller = new QueueController(client);
    await controller.refresh();
    const result = await controller.submitDecision("a", "Fund");
    expect(result.ok).toBe(false);
    expect(result.errorCode).toBe("NetworkError");
    expect(controller.view.map((i) => i.case_id)).toEqual(["a", "b"]);
  });

  it("keeps the item removed when someone else already decided it", async () => {
    const client = clientWith(async (url) => {
      if (url === "/review-queue") {
        return jsonResponse(200, [item("a", 0.99)]);
      }
      return jsonResponse(409, { code: "CaseNotPending", message: "case a is reviewed" });
    });
    const controller = new QueueController(client);
    await controller.refresh();
    const result = await controller.submitDecision("a", "Reject");
    expect(result.ok).toBe(false);
    expect(result.errorCode).toBe("CaseNotPending");
    expect(controller.view).toEqual([]);
  });
});

describe("gateway client errors", () => {
  it("surfaces machine-readable codes", async () => {
    const client = clientWith(async () =>
      jsonResponse(403, { code: "WrongRole", message: "customers may not decide" }),
    );
    await expect(client.submitDecision("x", "Fund")).rejects.toMatchObject({
      status: 403,
      code: "WrongRole",
    });
    const error = await client.triggerRetrain().catch((e0) => e0);
    expect(error).toBeInstanceOf(GatewayError);
  });
});

function artifactFixture(): ExplanationArtifact {
  return {
    schema_version: 1,
    customer_id: "cust-9",
    timestamp_ms: 1234,
    decision: { p_fund: 0.47, p_reject: 0.53, decision: "Reject" },
    entropy: 0.997,
    route: "human_review",
    attribute_names: ["sector", "purpose", "region", "credit"],
    relevance_maps: [
      {
        method: "lrp",
        params: { variant: "lrp_gamma" },
        target: "Reject",
        feature_relevances: [0.4, -0.1, 0.2, 0.0, 0.05, -0.3, 0.9, 0.1],
        attribute_relevances: [0.3, 0.2, -0.25, 0.9],
        normalized_attribute_relevances: [0.3333, 0.2222, 0.2778, 1.0],
        high_importance: [false, false, false, true],
        stats: { target_logit: 1.15 },
      },
      {
        method: "shap",
        params: { mode: "sampled" },
        target: "Reject",
        feature_relevances: [0, 0, 0, 0, 0, 0, 0, 0],
        attribute_relevances: [0.6, -0.55, 0.1, 0.05],
        normalized_attribute_relevances: [1.0, 0.9167, 0.1667, 0.0833],
        high_importance: [true, true, false, false],
        stats: { full_value: 0.53, background_value: 0.5 },
      },
    ],
  };
}

describe("explanation rendering", () => {
  it("marks exactly the attributes the payload flags as high importance", () => {
    const marks = highImportanceAttributes(artifactFixture());
    expect(marks.get("lrp (lrp_gamma)")).toEqual(["credit"]);
    expect(marks.get("shap")).toEqual(["sector", "purpose"]);
  });

  it("renders payload values verbatim, no recomputation", () => {
    const html = renderExplanation(artifactFixture());
    expect(html).toContain("entropy 0.997");
    expect(html).toContain("fund 0.470 / reject 0.530");
    expect(html).toContain("+0.900"); // signed attribute value straight from payload
    expect(html).toContain("-0.250");
    // the fixture's flags drive the marks, not any client-side threshold
    const row = renderRelevanceMap(artifactFixture().attribute_names, {
      ...artifactFixture().relevance_maps[0],
      high_importance: [true, false, false, false],
    });
    expect(row).toContain('data-attr="sector" data-high="true"');
    expect(row).toContain('data-attr="credit" data-high="false"');
  });

  it("signed bars keep their side", () => {
    const html = renderRelevanceMap(artifactFixture().attribute_names,
                                    artifactFixture().relevance_maps[0]);
    expect(html).toContain('class="bar pos"');
    expect(html).toContain('class="bar neg"');
    expect(html).toContain('class="bar pos high"');
  });

  it("renders a heatmap strip only for relevance-propagation maps", () => {
    const fixture = artifactFixture();
    const lrpHtml = renderRelevanceMap(fixture.attribute_names, fixture.relevance_maps[0]);
    const shapHtml = renderRelevanceMap(fixture.attribute_names, fixture.relevance_maps[1]);
    expect(lrpHtml).toContain('class="heatmap"');
    expect(shapHtml).not.toContain('class="heatmap"');
  });
});

describe("consent panel projection", () => {
  function state(legal: string[]): ConsentStateView {
    return {
      expert_id: "expert-1",
      org_id: "org-1",
      acquisition: "awaiting",
      withdrawal: "not_requested",
      access: "awaiting",
      updated_ms: 0,
      legal_events: legal,
    };
  }

  it("enables exactly the events the gateway reports as legal", () => {
    const buttons = consentButtons(
      state(["GrantAcquisition", "RejectAcquisition", "GrantAccess", "DenyAccess",
             "RequestWithdrawal", "Invalidate"]),
    );
    const enabled = buttons.filter((b) => b.enabled).map((b) => b.kind);
    expect(enabled).toContain("GrantAcquisition");
    expect(enabled).toContain("RejectAcquisition");
    expect(enabled).not.toContain("ProcessWithdrawal");
  });

  it("renders disabled buttons for illegal transitions", () => {
    const html = renderConsentPanel([state(["Invalidate"])]);
    expect(html).toContain('data-kind="Invalidate">');
    expect(html).toMatch(/data-kind="ProcessWithdrawal" disabled/);
  });
});

describe("audit rendering", () => {
  it("renders verdict color and reason", () => {
    const bad = renderVerdict({ tampered: true, reason: "hash_mismatch", details: "at height 4" });
    expect(bad).toContain("verdict bad");
    expect(bad).toContain("hash_mismatch");
    const ok = renderVerdict({ tampered: false, reason: "clean", details: "" });
    expect(ok).toContain("verdict ok");
  });

  it("renders batch reports with flagged rows", () => {
    const html = renderAuditReport({
      total_files: 10,
      tampered_found: 2,
      elapsed_seconds: 0.5,
      audit_ops: 46,
      verdicts: [
        { id: "a_1", tampered: true, reason: "decrypt_failure", details: "" },
        { id: "b_2", tampered: false, reason: "clean", details: "" },
        { id: "c_3", tampered: true, reason: "hash_mismatch", details: "" },
      ],
    });
    expect(html).toContain("2 / 10 records flagged");
    expect(html).toContain("a_1");
    expect(html).not.toContain("b_2");
  });
});
