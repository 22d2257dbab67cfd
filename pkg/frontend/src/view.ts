// The whole console view as a plain value computed from GET payloads.
// Refreshing mid-audit re-fetches the same payloads and must rebuild an
// identical view model.

import type { SessionStatus, TrajectoryPoint } from "./api.js";
import { BannerModel, bannerModel, formatP } from "./banner.js";
import { renderChart } from "./chart.js";

export interface ViewModel {
  banner: BannerModel;
  pFisher: string;
  pIntersection: string;
  counts: { sid: number; drawn: number; size: number; exhausted: boolean }[];
  chartSvg: string;
  stopped: boolean;
}

export function buildView(
  session: SessionStatus,
  trajectory: TrajectoryPoint[],
  previousBanner?: BannerModel | null,
): ViewModel {
  return {
    banner: bannerModel(session, previousBanner),
    pFisher: formatP(session.p_fisher),
    pIntersection: formatP(session.p_intersection),
    counts: session.strata.map((s) => ({
      sid: s.sid,
      drawn: session.counts[String(s.sid)] ?? 0,
      size: s.size,
      exhausted: s.exhausted,
    })),
    chartSvg: renderChart(trajectory, session.risk_limit),
    stopped: session.status === "stopped",
  };
}
