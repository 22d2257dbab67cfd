// End-to-end: drive the real Python session service with the console's
// own API client, replay the pilot-audit transcript, and check the stop
// banner's P-value against the CLI `measure` on the same card sequence.

import { ChildProcess, execFileSync, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, AuditApi, SessionStatus, TrajectoryPoint } from "../src/api.js";
import { bannerModel } from "../src/banner.js";
import { buildView } from "../src/view.js";
import { describeRejection } from "../src/entry.js";

const PORT = 8741;
const BASE = `http://127.0.0.1:${PORT}`;
const api = new AuditApi(BASE);

let service: ChildProcess;
let workDir: string;

const SESSION_CONFIG = {
  strata: [
    { sid: 1, size: 5294, kind: "comparison" as const, reported_margin: 0.55, method: "alpha_ub" as const },
    { sid: 2, size: 22732, kind: "polling" as const, reported_margin: 0.57, method: "alpha_st" as const },
  ],
  risk_limit: 0.05,
};

interface TranscriptCard {
  stratum: number;
  mvr: string;
  cvr?: string;
}

/** Fixed-order pilot transcript: 8 comparison cards (all matching) spread
 * through 32 polling cards (23 winner, 5 loser, 4 other). */
function kalamazooTranscript(): TranscriptCard[] {
  const polling: string[] = [];
  const tallies: [string, number][] = [["winner", 23], ["loser", 5], ["other", 4]];
  // deterministic spread: cycle through the tally pools
  const pools = tallies.map(([label, count]) => Array(count).fill(label));
  const pattern = [0, 0, 1, 0, 0, 2, 0, 1];
  let i = 0;
  while (polling.length < 32) {
    const pool = pools[pattern[i % pattern.length]];
    if (pool.length > 0) polling.push(pool.pop());
    i += 1;
  }
  const cards: TranscriptCard[] = [];
  let p = 0;
  for (let block = 0; block < 8; block += 1) {
    cards.push({ stratum: 1, mvr: "winner", cvr: "winner" });
    for (let j = 0; j < 4; j += 1) {
      cards.push({ stratum: 2, mvr: polling[p] });
      p += 1;
    }
  }
  return cards;
}

async function waitForHealth(timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/health`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error("session service did not come up");
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "console-e2e-"));
  service = spawn(
    "python3",
    ["-m", "strataudit.cli", "serve", "--port", String(PORT),
     "--state-dir", join(workDir, "state")],
    { stdio: "ignore" },
  );
  await waitForHealth();
}, 60000);

afterAll(() => {
  service?.kill();
});

describe("console end to end", () => {
  it("replays the pilot transcript to the stop banner and matches the CLI", async () => {
    const sessionId = await api.createSession(SESSION_CONFIG);
    let session = await api.getSession(sessionId);
    expect(session.p_intersection).toBe(1.0);
    expect(bannerModel(session, null).kind).toBe("recommend");

    const consumed: TranscriptCard[] = [];
    for (const card of kalamazooTranscript()) {
      session = await api.postCard(sessionId, card);
      consumed.push(card);
      if (session.status === "stopped") break;
    }
    expect(session.status).toBe("stopped");
    const banner = bannerModel(session, null);
    expect(banner.kind).toBe("stopped");
    expect(banner.headline).toMatch(/stop/i);

    // an extra card is refused and surfaces gracefully
    try {
      await api.postCard(sessionId, { stratum: 2, mvr: "winner" });
      expect.unreachable("stopped session accepted a card");
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      const rejection = describeRejection(
        (err as ApiError).status,
        (err as ApiError).detail,
      );
      expect(rejection).toMatch(/already stopped/);
    }

    // the CLI measure on the same consumed sequence reports the same risk
    const configPath = join(workDir, "config.json");
    writeFileSync(configPath, JSON.stringify(SESSION_CONFIG));
    const samplePath = join(workDir, "sample.csv");
    const rows = ["stratum,cvr,mvr"];
    for (const c of consumed) rows.push(`${c.stratum},${c.cvr ?? ""},${c.mvr}`);
    writeFileSync(samplePath, rows.join("\n") + "\n");
    const out = execFileSync("python3", [
      "-m", "strataudit.cli", "measure",
      "--config", configPath, "--sample", samplePath,
    ]).toString();
    const measured = JSON.parse(out);
    expect(measured.draws).toBe(consumed.length);
    expect(
      Math.abs(measured.final_p_intersection - session.p_intersection),
    ).toBeLessThanOrEqual(1e-12);
  }, 120000);

  it("rebuilds an identical view after a mid-audit refresh", async () => {
    const sessionId = await api.createSession(SESSION_CONFIG);
    for (const card of kalamazooTranscript().slice(0, 11)) {
      await api.postCard(sessionId, card);
    }
    const fetchView = async () => {
      const [session, trajectory]: [SessionStatus, TrajectoryPoint[]] =
        await Promise.all([api.getSession(sessionId), api.getTrajectory(sessionId)]);
      return buildView(session, trajectory, null);
    };
    const before = await fetchView();
    const after = await fetchView(); // "refresh": same endpoints, fresh state
    expect(after).toEqual(before);
    expect(before.counts.map((c) => c.drawn)).toEqual([3, 8]);
  }, 60000);
});
