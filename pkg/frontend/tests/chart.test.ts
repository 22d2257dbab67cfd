import { describe, expect, it } from "vitest";

import type { TrajectoryPoint } from "../src/api.js";
import { DEFAULT_GEOMETRY, logY, renderChart, seedTrajectory } from "../src/chart.js";
import { bannerModel } from "../src/banner.js";
import { buildView } from "../src/view.js";
import type { SessionStatus } from "../src/api.js";

function pt(i: number, p: number): TrajectoryPoint {
  return { draw_index: i, stratum: 1, p_fisher: p, p_intersection: p / 2 };
}

describe("log-scale chart", () => {
  it("maps one decade per grid step, top at p = 1", () => {
    const top = logY(1.0);
    const mid = logY(0.1);
    const usable =
      DEFAULT_GEOMETRY.height - DEFAULT_GEOMETRY.padTop - DEFAULT_GEOMETRY.padBottom;
    expect(top).toBeCloseTo(DEFAULT_GEOMETRY.padTop, 6);
    expect(mid - top).toBeCloseTo(usable / 6, 6); // floor 1e-6: six decades
  });

  it("clamps below the floor instead of diverging", () => {
    expect(logY(1e-12)).toBeCloseTo(
      DEFAULT_GEOMETRY.height - DEFAULT_GEOMETRY.padBottom,
      6,
    );
  });

  it("renders a flatline at P = 1 for a fresh session", () => {
    const svg = renderChart([], 0.05);
    expect(svg).toContain("polyline");
    expect(seedTrajectory([])[0].p_fisher).toBe(1);
    // both series present plus the risk rule
    expect(svg).toContain('class="fisher"');
    expect(svg).toContain('class="intersection"');
    expect(svg).toContain('class="risk-limit"');
  });

  it("draws one point per accepted card", () => {
    const svg = renderChart([pt(1, 0.8), pt(2, 0.4), pt(3, 0.04)], 0.05);
    const fisher = svg.match(/class="fisher"[^/]*points="([^"]+)"/);
    expect(fisher).not.toBeNull();
    expect(fisher![1].split(" ")).toHaveLength(3);
  });
});

const baseSession: SessionStatus = {
  status: "running",
  p_fisher: 0.2,
  p_intersection: 0.1,
  counts: { "1": 3, "2": 4 },
  recommended_stratum: 2,
  rationale: "proportional rule",
  risk_limit: 0.05,
  headline: "intersection",
  draws: 7,
  strata: [
    { sid: 1, size: 50, kind: "comparison", method: "alpha_ub", exhausted: false },
    { sid: 2, size: 50, kind: "polling", method: "alpha_st", exhausted: false },
  ],
};

describe("banner and view model", () => {
  it("recommends while running and flashes on change", () => {
    const first = bannerModel(baseSession, null);
    expect(first.kind).toBe("recommend");
    expect(first.flash).toBe(false);
    const moved = bannerModel(
      { ...baseSession, recommended_stratum: 1 },
      first,
    );
    expect(moved.flash).toBe(true);
  });

  it("raises the stop banner at or below the risk limit", () => {
    const stopped = bannerModel(
      { ...baseSession, status: "stopped", p_intersection: 0.04 },
      null,
    );
    expect(stopped.kind).toBe("stopped");
    expect(stopped.headline).toMatch(/stop/i);
  });

  it("is a pure function of the server payloads", () => {
    const traj = [pt(1, 0.9), pt(2, 0.5)];
    const a = buildView(baseSession, traj, null);
    const b = buildView(baseSession, traj, null);
    expect(a).toEqual(b);
    expect(a.counts).toEqual([
      { sid: 1, drawn: 3, size: 50, exhausted: false },
      { sid: 2, drawn: 4, size: 50, exhausted: false },
    ]);
  });
});
