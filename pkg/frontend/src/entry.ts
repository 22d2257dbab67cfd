// Card entry: keyboard-first interpretation of the card in hand.
// w/l/o set the manual interpretation; comparison strata also take a CVR
// value before the card can be submitted.

import type { CardBody, SessionStatus } from "./api.js";

export type Vote = "winner" | "loser" | "other";

export const KEY_TO_VOTE: Record<string, Vote> = {
  w: "winner",
  l: "loser",
  o: "other",
};

export interface EntryState {
  stratum: number | null;
  mvr: Vote | null;
  cvr: Vote | null;
  error: string | null;
}

export function emptyEntry(): EntryState {
  return { stratum: null, mvr: null, cvr: null, error: null };
}

export function needsCvr(session: SessionStatus, stratum: number | null): boolean {
  if (stratum == null) return false;
  const s = session.strata.find((x) => x.sid === stratum);
  return s?.kind === "comparison";
}

/** Apply one keystroke. Digits pick the stratum, w/l/o fill the manual
 * interpretation first and the CVR second (when one is needed). */
export function applyKey(
  state: EntryState,
  key: string,
  session: SessionStatus,
): EntryState {
  const next = { ...state, error: null as string | null };
  if (/^[0-9]$/.test(key)) {
    const sid = Number(key);
    if (!session.strata.some((s) => s.sid === sid)) {
      return { ...next, error: `no stratum ${sid}` };
    }
    return { ...emptyEntry(), stratum: sid };
  }
  const vote = KEY_TO_VOTE[key.toLowerCase()];
  if (!vote) return { ...next, error: `unrecognized key "${key}"` };
  if (next.stratum == null) {
    return { ...next, error: "pick the stratum first (number key)" };
  }
  if (next.mvr == null) return { ...next, mvr: vote };
  if (needsCvr(session, next.stratum) && next.cvr == null) {
    return { ...next, cvr: vote };
  }
  return { ...next, error: "card already filled; submit or clear" };
}

export function readyToSubmit(state: EntryState, session: SessionStatus): boolean {
  if (state.stratum == null || state.mvr == null) return false;
  if (needsCvr(session, state.stratum) && state.cvr == null) return false;
  return true;
}

export function toCardBody(state: EntryState, session: SessionStatus): CardBody {
  if (!readyToSubmit(state, session)) {
    throw new Error("card entry incomplete");
  }
  const body: CardBody = { stratum: state.stratum!, mvr: state.mvr! };
  if (needsCvr(session, state.stratum)) body.cvr = state.cvr!;
  return body;
}

/** Render a server rejection into an operator-readable message. */
export function describeRejection(status: number, detail: unknown): string {
  if (status === 409) {
    return "the session has already stopped; no more cards are accepted";
  }
  if (status === 422) {
    if (Array.isArray(detail)) {
      return (detail as { msg?: string }[])
        .map((d) => d.msg ?? JSON.stringify(d))
        .join("; ");
    }
    return String(detail);
  }
  return `service error ${status}`;
}
