// Audit panel rendering: verdicts and batch reports shown as delivered.

import type { AuditReport, TamperVerdict } from "./types.js";

export function renderVerdict(verdict: TamperVerdict): string {
  const cls = verdict.tampered ? "verdict bad" : "verdict ok";
  const flag = verdict.tampered ? "TAMPERED" : "clean";
  return (
    `<div class="${cls}" data-tampered="${verdict.tampered}">` +
    `<strong>${flag}</strong> <code>${verdict.reason}</code>` +
    `<p>${verdict.details}</p>` +
    `</div>`
  );
}

export function renderAuditReport(report: AuditReport): string {
  const rows = report.verdicts
    .filter((v) => v.tampered)
    .map((v) => `<li><code>${v.id}</code> ${v.reason}</li>`)
    .join("");
  return (
    `<div class="audit-report">` +
    `<p>${report.tampered_found} / ${report.total_files} records flagged · ` +
    `${report.audit_ops} audit ops · ${report.elapsed_seconds.toFixed(3)}s</p>` +
    `<ul>${rows}</ul>` +
    `</div>`
  );
}
