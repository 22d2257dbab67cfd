// Recommendation and verdict banners, derived purely from the latest
// session payload so a refresh rebuilds the identical view.

import type { SessionStatus } from "./api.js";

export interface BannerModel {
  kind: "recommend" | "stopped" | "exhausted";
  headline: string;
  detail: string;
  flash: boolean;
}

export function bannerModel(
  session: SessionStatus,
  previous?: BannerModel | null,
): BannerModel {
  let model: BannerModel;
  if (session.status === "stopped") {
    model = {
      kind: "stopped",
      headline: "Risk limit met - the audit can stop",
      detail:
        `P (${session.headline}) is at or below ${session.risk_limit}` +
        ` after ${session.draws} cards`,
      flash: false,
    };
  } else if (session.status === "exhausted" || session.recommended_stratum == null) {
    model = {
      kind: "exhausted",
      headline: "No stratum left to sample",
      detail: session.rationale,
      flash: false,
    };
  } else {
    model = {
      kind: "recommend",
      headline: `Pull the next card from stratum ${session.recommended_stratum}`,
      detail: session.rationale,
      flash: false,
    };
  }
  model.flash =
    previous != null &&
    (previous.kind !== model.kind || previous.headline !== model.headline);
  return model;
}

export function formatP(p: number): string {
  if (p >= 0.001) return p.toFixed(4);
  return p.toExponential(2);
}
