import type { Prediction } from "./api.js";

// Display percentages are the service's probabilities rounded half-up to
// one decimal place; they are never recomputed or renormalized here.
export function formatPercent(probability: number): string {
  const tenths = Math.round(probability * 1000) / 10;
  return `${tenths.toFixed(1)}%`;
}

export function topPredictions(predictions: Prediction[], k = 3): Prediction[] {
  return [...predictions]
    .sort((a, b) => b.probability - a.probability)
    .slice(0, k);
}

// Bar width in percent for the confidence bars (purely presentational).
export function barWidth(probability: number): string {
  const clamped = Math.max(0, Math.min(1, probability));
  return `${(clamped * 100).toFixed(2)}%`;
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function prettyLabel(label: string): string {
  return escapeHtml(label.replace(/_/g, " "));
}

// Result panel markup: top three with percentage bars, the full ranked
// table behind an expander. Values come verbatim from the response.
export function renderResultHtml(predictions: Prediction[]): string {
  const ranked = topPredictions(predictions, predictions.length);
  const top = ranked.slice(0, 3);
  const bars = top
    .map(
      (p, i) => `
  <div class="prediction ${i === 0 ? "prediction-top" : ""}">
    <span class="prediction-label">${prettyLabel(p.label)}</span>
    <span class="prediction-bar"><span class="prediction-fill" style="width:${barWidth(p.probability)}"></span></span>
    <span class="prediction-pct">${formatPercent(p.probability)}</span>
  </div>`,
    )
    .join("\n");
  const rows = ranked
    .map(
      (p, i) =>
        `<tr><td>${i + 1}</td><td>${prettyLabel(p.label)}</td><td>${formatPercent(p.probability)}</td></tr>`,
    )
    .join("\n");
  return `${bars}
<details class="all-classes">
  <summary>All ${ranked.length} classes</summary>
  <table><thead><tr><th>#</th><th>class</th><th>confidence</th></tr></thead>
  <tbody>${rows}</tbody></table>
</details>`;
}
