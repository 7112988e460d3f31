"""SVG rendering of explanation artifacts.

Visuals are derived from the canonical artifact bytes and are never hashed
or anchored themselves: the artifact is the contract, the picture is a view.
Positive contributions render green, negative red; attributes whose
normalized magnitude exceeds the high-importance level carry a diagonal
hatch overlay.
"""

from __future__ import annotations

from typing import Any

__all__ = ["render_artifact_svg"]

_BAR_H = 16
_ROW_GAP = 6
_LABEL_W = 170
_BAR_AREA = 360
_SECTION_GAP = 34


def _esc(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _bar_chart(out: list[str], y: int, title: str, names: list[str],
               values: list[float], flags: list[bool]) -> int:
    out.append(f'<text x="12" y="{y}" class="h2">{_esc(title)}</text>')
    y += 12
    top = max((abs(v) for v in values), default=0.0) or 1.0
    mid = _LABEL_W + _BAR_AREA / 2
    full = len(names) * (_BAR_H + _ROW_GAP)
    out.append(
        f'<line x1="{mid}" y1="{y}" x2="{mid}" y2="{y + full}" stroke="#999" stroke-width="1"/>'
    )
    for name, value, flagged in zip(names, values, flags):
        width = abs(value) / top * (_BAR_AREA / 2 - 4)
        x = mid if value >= 0 else mid - width
        color = "#2e7d32" if value >= 0 else "#c62828"
        out.append(
            f'<text x="{_LABEL_W - 8}" y="{y + _BAR_H - 4}" text-anchor="end" class="lbl">'
            f"{_esc(name)}</text>"
        )
        out.append(
            f'<rect x="{x:.2f}" y="{y}" width="{max(width, 0.5):.2f}" height="{_BAR_H}" '
            f'fill="{color}" fill-opacity="0.85"/>'
        )
        if flagged:
            out.append(
                f'<rect x="{x:.2f}" y="{y}" width="{max(width, 0.5):.2f}" height="{_BAR_H}" '
                f'fill="url(#hatch)"/>'
            )
        out.append(
            f'<text x="{mid + (width + 6 if value >= 0 else -width - 6):.2f}" '
            f'y="{y + _BAR_H - 4}" text-anchor="{"start" if value >= 0 else "end"}" class="val">'
            f"{value:+.3f}</text>"
        )
        y += _BAR_H + _ROW_GAP
    return y + _SECTION_GAP


def _heatmap_strip(out: list[str], y: int, title: str, values: list[float]) -> int:
    out.append(f'<text x="12" y="{y}" class="h2">{_esc(title)}</text>')
    y += 10
    top = max((abs(v) for v in values), default=0.0) or 1.0
    cell = min(12.0, (_LABEL_W + _BAR_AREA - 24) / max(len(values), 1))
    for i, v in enumerate(values):
        mag = abs(v) / top
        # green for positive, red for negative, intensity by magnitude
        color = (
            f"rgb({int(255 - 160 * mag)},{int(255 - 40 * mag)},{int(255 - 160 * mag)})"
            if v >= 0
            else f"rgb({int(255 - 40 * mag)},{int(255 - 170 * mag)},{int(255 - 170 * mag)})"
        )
        out.append(
            f'<rect x="{12 + i * cell:.2f}" y="{y}" width="{cell:.2f}" height="22" '
            f'fill="{color}" stroke="#ddd" stroke-width="0.25"/>'
        )
    return y + 22 + _SECTION_GAP


def render_artifact_svg(artifact: dict[str, Any]) -> str:
    """Render the canonical artifact value as a standalone SVG document."""
    names = artifact["attribute_names"]
    maps = artifact["relevance_maps"]
    bar_block = len(names) * (_BAR_H + _ROW_GAP) + 12 + _SECTION_GAP
    height = 96 + sum(
        bar_block if m["method"] != "lrp" else bar_block + 32 + _SECTION_GAP for m in maps
    )
    width = _LABEL_W + _BAR_AREA + 80

    out: list[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        "<defs>"
        '<pattern id="hatch" width="6" height="6" patternTransform="rotate(45)" '
        'patternUnits="userSpaceOnUse">'
        '<line x1="0" y1="0" x2="0" y2="6" stroke="#1a1a1a" stroke-width="1.2"/>'
        "</pattern>"
        "</defs>",
        "<style>"
        ".h1{font:bold 15px sans-serif}.h2{font:bold 12px sans-serif}"
        ".lbl{font:10px sans-serif}.val{font:10px monospace}.meta{font:11px sans-serif}"
        "</style>",
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]

    decision = artifact["decision"]
    entropy = artifact["entropy"]
    badge = "#2e7d32" if artifact["route"] == "auto_decide" else "#c62828"
    out.append(
        f'<text x="12" y="24" class="h1">Decision for {_esc(artifact["customer_id"])}: '
        f'{_esc(decision.get("decision", ""))}</text>'
    )
    out.append(
        f'<text x="12" y="44" class="meta">fund {decision["p_fund"]:.3f} / '
        f'reject {decision["p_reject"]:.3f} · recorded {artifact["timestamp_ms"]}</text>'
    )
    out.append(f'<rect x="12" y="54" width="150" height="18" rx="9" fill="{badge}"/>')
    out.append(
        f'<text x="87" y="67" text-anchor="middle" fill="white" class="meta">'
        f"entropy {entropy:.3f}</text>"
    )

    y = 96
    for m in maps:
        label = m["method"]
        params = m.get("params", {})
        if label == "lrp":
            label = f"lrp ({params.get('variant', '')})"
        y = _bar_chart(
            out, y,
            f"{label} · target {m['target']}",
            names,
            m["attribute_relevances"],
            m["high_importance"],
        )
        if m["method"] == "lrp":
            y = _heatmap_strip(out, y - _SECTION_GAP, "per-feature relevance", m["feature_relevances"])

    out.append("</svg>")
    return "".join(out)
