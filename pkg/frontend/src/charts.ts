// Hand-rolled SVG snippets; every function returns a markup string for
// innerHTML so rendering stays trivial to test without a DOM.

export function escapeXml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&apos;");
}

const fmt = (v: number) => (Math.round(v * 100) / 100).toString();

export interface RatingPoint {
  step: number;
  rating: number;
}

/**
 * Ratings over the session as a connected dot plot, y fixed to the 1..5
 * rating scale so the shape is comparable between sessions.
 */
export function ratingHistoryChart(points: RatingPoint[], width = 440, height = 160): string {
  const padL = 26;
  const padR = 10;
  const padY = 14;
  const spanX = Math.max(1, points.length - 1);
  const x = (i: number) => padL + ((width - padL - padR) * i) / spanX;
  const y = (r: number) => height - padY - ((height - 2 * padY) * (r - 1)) / 4;

  const grid: string[] = [];
  for (let r = 1; r <= 5; r++) {
    grid.push(
      `<line x1="${padL}" y1="${fmt(y(r))}" x2="${width - padR}" y2="${fmt(y(r))}" class="grid"/>`,
      `<text x="${padL - 6}" y="${fmt(y(r) + 3)}" class="tick" text-anchor="end">${r}</text>`,
    );
  }
  const line =
    points.length > 1
      ? `<polyline class="series" points="${points.map((p, i) => `${fmt(x(i))},${fmt(y(p.rating))}`).join(" ")}"/>`
      : "";
  const dots = points
    .map((p, i) => `<circle class="dot" cx="${fmt(x(i))}" cy="${fmt(y(p.rating))}" r="3"/>`)
    .join("");
  return (
    `<svg viewBox="0 0 ${width} ${height}" role="img" aria-label="rating history">` +
    grid.join("") +
    line +
    dots +
    `</svg>`
  );
}

export interface IntervalRow {
  label: string;
  mean: number;
  sd: number;
  quantile: number;
}

/**
 * Horizontal mean±sd interval per song with a tick at the exploration
 * quantile the policy actually ranks by.  Rows come pre-sorted by caller.
 */
export function posteriorIntervalChart(rows: IntervalRow[], width = 440): string {
  if (rows.length === 0) {
    return `<svg viewBox="0 0 ${width} 20"><text x="4" y="14" class="tick">no posterior yet</text></svg>`;
  }
  const rowH = 22;
  const padL = 120;
  const padR = 12;
  const height = rows.length * rowH + 8;
  let lo = Infinity;
  let hi = -Infinity;
  for (const r of rows) {
    lo = Math.min(lo, r.mean - r.sd, r.quantile);
    hi = Math.max(hi, r.mean + r.sd, r.quantile);
  }
  if (!(hi > lo)) {
    hi = lo + 1;
  }
  const x = (v: number) => padL + ((width - padL - padR) * (v - lo)) / (hi - lo);

  const parts: string[] = [];
  const zero = x(0);
  if (zero >= padL && zero <= width - padR) {
    parts.push(`<line x1="${fmt(zero)}" y1="4" x2="${fmt(zero)}" y2="${height - 4}" class="grid"/>`);
  }
  rows.forEach((r, i) => {
    const cy = i * rowH + rowH / 2 + 4;
    parts.push(
      `<text x="${padL - 8}" y="${fmt(cy + 3)}" class="tick" text-anchor="end">${escapeXml(r.label)}</text>`,
      `<line x1="${fmt(x(r.mean - r.sd))}" y1="${fmt(cy)}" x2="${fmt(x(r.mean + r.sd))}" y2="${fmt(cy)}" class="interval"/>`,
      `<circle cx="${fmt(x(r.mean))}" cy="${fmt(cy)}" r="3" class="dot"/>`,
      `<line x1="${fmt(x(r.quantile))}" y1="${fmt(cy - 6)}" x2="${fmt(x(r.quantile))}" y2="${fmt(cy + 6)}" class="quantile"/>`,
    );
  });
  return `<svg viewBox="0 0 ${width} ${height}" role="img" aria-label="posterior intervals">${parts.join("")}</svg>`;
}

/** Sparkline of posterior uncertainty after each rating. */
export function uncertaintyTrendChart(values: number[], width = 200, height = 44): string {
  if (values.length === 0) {
    return `<svg viewBox="0 0 ${width} ${height}"></svg>`;
  }
  const pad = 4;
  const hi = Math.max(...values);
  const lo = Math.min(...values);
  const span = hi > lo ? hi - lo : 1;
  const x = (i: number) => pad + ((width - 2 * pad) * i) / Math.max(1, values.length - 1);
  const y = (v: number) => height - pad - ((height - 2 * pad) * (v - lo)) / span;
  const pts = values.map((v, i) => `${fmt(x(i))},${fmt(y(v))}`).join(" ");
  const last = values[values.length - 1];
  return (
    `<svg viewBox="0 0 ${width} ${height}" role="img" aria-label="uncertainty trend">` +
    (values.length > 1 ? `<polyline class="series" points="${pts}"/>` : "") +
    `<circle class="dot" cx="${fmt(x(values.length - 1))}" cy="${fmt(y(last))}" r="2.5"/>` +
    `</svg>`
  );
}
