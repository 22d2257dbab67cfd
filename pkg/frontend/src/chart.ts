// Trajectory chart: both maximized P-values on a log scale against the
// risk-limit rule line, rendered as a static SVG string.

import type { TrajectoryPoint } from "./api.js";

export interface ChartGeometry {
  width: number;
  height: number;
  padLeft: number;
  padRight: number;
  padTop: number;
  padBottom: number;
  floor: number; // smallest P drawn distinctly on the log axis
}

export const DEFAULT_GEOMETRY: ChartGeometry = {
  width: 640,
  height: 280,
  padLeft: 54,
  padRight: 12,
  padTop: 10,
  padBottom: 28,
  floor: 1e-6,
};

export function logY(p: number, geom: ChartGeometry = DEFAULT_GEOMETRY): number {
  const clamped = Math.min(1, Math.max(geom.floor, p));
  const span = -Math.log10(geom.floor); // decades between floor and 1
  const frac = -Math.log10(clamped) / span; // 0 at p=1, 1 at floor
  const usable = geom.height - geom.padTop - geom.padBottom;
  return geom.padTop + frac * usable;
}

export function xAt(
  index: number,
  total: number,
  geom: ChartGeometry = DEFAULT_GEOMETRY,
): number {
  const usable = geom.width - geom.padLeft - geom.padRight;
  if (total <= 1) return geom.padLeft;
  return geom.padLeft + (index / (total - 1)) * usable;
}

export function polyline(
  points: TrajectoryPoint[],
  pick: (p: TrajectoryPoint) => number,
  geom: ChartGeometry = DEFAULT_GEOMETRY,
): string {
  if (points.length === 0) return "";
  if (points.length === 1) {
    const y = logY(pick(points[0]), geom).toFixed(2);
    return `${geom.padLeft},${y} ${(geom.width - geom.padRight).toFixed(2)},${y}`;
  }
  return points
    .map((p, i) => `${xAt(i, points.length, geom).toFixed(2)},${logY(pick(p), geom).toFixed(2)}`)
    .join(" ");
}

/** Flat line at P = 1 so a fresh session still shows both series. */
export function seedTrajectory(points: TrajectoryPoint[]): TrajectoryPoint[] {
  if (points.length > 0) return points;
  return [{ draw_index: 0, stratum: 0, p_fisher: 1.0, p_intersection: 1.0 }];
}

export function renderChart(
  rawPoints: TrajectoryPoint[],
  riskLimit: number,
  geom: ChartGeometry = DEFAULT_GEOMETRY,
): string {
  const points = seedTrajectory(rawPoints);
  const ruleY = logY(riskLimit, geom).toFixed(2);
  const gridLines: string[] = [];
  for (let d = 0; -Math.log10(geom.floor) >= d; d += 1) {
    const p = Math.pow(10, -d);
    const y = logY(p, geom).toFixed(2);
    gridLines.push(
      `<line x1="${geom.padLeft}" y1="${y}" x2="${geom.width - geom.padRight}" y2="${y}" class="grid"/>` +
        `<text x="4" y="${y}" class="tick">1e-${d}</text>`,
    );
  }
  return [
    `<svg viewBox="0 0 ${geom.width} ${geom.height}" role="img" aria-label="P-value trajectories">`,
    ...gridLines,
    `<line x1="${geom.padLeft}" y1="${ruleY}" x2="${geom.width - geom.padRight}" y2="${ruleY}" class="risk-limit"/>`,
    `<polyline class="fisher" fill="none" points="${polyline(points, (p) => p.p_fisher, geom)}"/>`,
    `<polyline class="intersection" fill="none" points="${polyline(points, (p) => p.p_intersection, geom)}"/>`,
    `</svg>`,
  ].join("");
}
