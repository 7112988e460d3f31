// Thin typed client over the gateway HTTP surface.

import type {
  ApplicationCase,
  AuditReport,
  ConsentEventKind,
  ConsentStateView,
  ExplanationArtifact,
  GatewayErrorBody,
  RetrainRecord,
  ReviewItem,
  TamperVerdict,
} from "./types.js";

export interface Credentials {
  actorId: string;
  credential: string;
}

export class GatewayError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export class GatewayClient {
  constructor(
    private readonly baseUrl: string,
    private credentials: Credentials | null = null,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  setCredentials(credentials: Credentials | null): void {
    this.credentials = credentials;
  }

  get actorId(): string | null {
    return this.credentials?.actorId ?? null;
  }

  private headers(): Record<string, string> {
    const base: Record<string, string> = { "Content-Type": "application/json" };
    if (this.credentials) {
      base["X-Actor-Id"] = this.credentials.actorId;
      base["X-Credential"] = this.credentials.credential;
    }
    return base;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let code = "HttpError";
      let message = `${response.status}`;
      try {
        const parsed = (await response.json()) as Partial<GatewayErrorBody>;
        code = parsed.code ?? code;
        message = parsed.message ?? message;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new GatewayError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  loadQueue(): Promise<ReviewItem[]> {
    return this.request<ReviewItem[]>("GET", "/review-queue");
  }

  getCase(caseId: string): Promise<ApplicationCase> {
    return this.request<ApplicationCase>("GET", `/applications/${caseId}`);
  }

  submitApplication(customerId: string, attributes: Record<string, string>): Promise<ApplicationCase> {
    return this.request<ApplicationCase>("POST", "/applications", {
      customer_id: customerId,
      attributes,
    });
  }

  getExplanation(caseId: string): Promise<ExplanationArtifact> {
    return this.request<ExplanationArtifact>("GET", `/applications/${caseId}/explanation`);
  }

  submitDecision(caseId: string, decision: "Fund" | "Reject"): Promise<ApplicationCase> {
    return this.request<ApplicationCase>("POST", `/review-queue/${caseId}/decision`, { decision });
  }

  getConsents(expertId: string): Promise<ConsentStateView[]> {
    return this.request<ConsentStateView[]>("GET", `/consents/${expertId}`);
  }

  sendConsentEvent(expertId: string, kind: ConsentEventKind): Promise<ConsentStateView> {
    return this.request<ConsentStateView>("POST", `/consents/${expertId}/events`, { kind });
  }

  auditCase(caseId: string): Promise<TamperVerdict> {
    return this.request<TamperVerdict>("POST", `/audits/explanations/${caseId}`);
  }

  auditConsent(expertId: string): Promise<TamperVerdict> {
    return this.request<TamperVerdict>("POST", `/audits/consents/${expertId}`);
  }

  auditBatch(tamperFraction: number, seed: number): Promise<AuditReport> {
    return this.request<AuditReport>("POST", "/audits/batch", {
      tamper_fraction: tamperFraction,
      seed,
    });
  }

  triggerRetrain(): Promise<RetrainRecord> {
    return this.request<RetrainRecord>("POST", "/admin/retrain");
  }
}
