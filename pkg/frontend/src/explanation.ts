// Explanation rendering: a pure function from artifact payload values to
// markup. Bars and marks reflect the gateway's numbers exactly; nothing is
// recomputed client-side, including the high-importance flags.

import type { ExplanationArtifact, RelevanceMapView } from "./types.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function methodLabel(map: RelevanceMapView): string {
  if (map.method === "lrp") {
    const variant = map.params["variant"];
    return typeof variant === "string" ? `lrp (${variant})` : "lrp";
  }
  return map.method;
}

export function renderBarRow(
  name: string,
  value: number,
  normalized: number,
  highImportance: boolean,
  peak: number,
): string {
  const width = peak > 0 ? (Math.abs(value) / peak) * 50 : 0;
  const side = value >= 0 ? "pos" : "neg";
  const mark = highImportance ? " high" : "";
  return (
    `<div class="bar-row${mark}" data-attr="${esc(name)}" data-high="${highImportance}">` +
    `<span class="bar-label">${esc(name)}</span>` +
    `<span class="bar-track">` +
    `<span class="bar ${side}${mark}" style="width:${width.toFixed(2)}%"></span>` +
    `</span>` +
    `<span class="bar-value">${value >= 0 ? "+" : ""}${value.toFixed(3)}</span>` +
    `<span class="bar-norm">${normalized.toFixed(2)}</span>` +
    `</div>`
  );
}

export function renderRelevanceMap(names: string[], map: RelevanceMapView): string {
  const peak = Math.max(...map.attribute_relevances.map(Math.abs), 0);
  const rows = names
    .map((name, i) =>
      renderBarRow(
        name,
        map.attribute_relevances[i],
        map.normalized_attribute_relevances[i],
        map.high_importance[i],
        peak,
      ),
    )
    .join("");
  const strip =
    map.method === "lrp"
      ? `<div class="heatmap">${renderHeatStrip(map.feature_relevances)}</div>`
      : "";
  return (
    `<section class="relevance-map" data-method="${esc(map.method)}">` +
    `<h3>${esc(methodLabel(map))} &middot; target ${esc(map.target)}</h3>` +
    rows +
    strip +
    `</section>`
  );
}

export function renderHeatStrip(values: number[]): string {
  const peak = Math.max(...values.map(Math.abs), 0) || 1;
  return values
    .map((v) => {
      const intensity = Math.abs(v) / peak;
      const hue = v >= 0 ? 130 : 0;
      return `<span class="cell" style="background:hsl(${hue},70%,${(95 - 45 * intensity).toFixed(0)}%)"></span>`;
    })
    .join("");
}

export function renderExplanation(artifact: ExplanationArtifact): string {
  const decision = artifact.decision;
  const band = artifact.route === "auto_decide" ? "auto" : "review";
  const maps = artifact.relevance_maps
    .map((map) => renderRelevanceMap(artifact.attribute_names, map))
    .join("");
  return (
    `<article class="explanation">` +
    `<header>` +
    `<h2>${esc(artifact.customer_id)} &middot; ${esc(decision.decision)}</h2>` +
    `<p>fund ${decision.p_fund.toFixed(3)} / reject ${decision.p_reject.toFixed(3)}</p>` +
    `<span class="entropy-badge ${band}">entropy ${artifact.entropy.toFixed(3)}</span>` +
    `</header>` +
    maps +
    `</article>`
  );
}

/** Attribute names the artifact marks as high-importance, per map. */
export function highImportanceAttributes(artifact: ExplanationArtifact): Map<string, string[]> {
  const out = new Map<string, string[]>();
  for (const map of artifact.relevance_maps) {
    out.set(
      methodLabel(map),
      artifact.attribute_names.filter((_, i) => map.high_importance[i]),
    );
  }
  return out;
}
