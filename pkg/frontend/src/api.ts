// Typed client for the audit-session service. The console never computes
// risk itself: every number shown comes from these endpoints.

export interface StratumConfig {
  sid: number;
  size: number;
  kind: "polling" | "comparison";
  u_a?: number;
  reported_margin?: number | null;
  reported_mean?: number | null;
  method: "alpha_st" | "alpha_ub" | "eb";
}

export interface SessionConfig {
  strata: StratumConfig[];
  risk_limit: number;
  selector_rule?: string;
  maximizer?: string;
  headline?: string;
  grid_resolution?: number | null;
}

export interface StratumStatus {
  sid: number;
  size: number;
  kind: string;
  method: string;
  exhausted: boolean;
}

export interface SessionStatus {
  status: "running" | "stopped" | "exhausted";
  p_fisher: number;
  p_intersection: number;
  counts: Record<string, number>;
  recommended_stratum: number | null;
  rationale: string;
  risk_limit: number;
  headline: string;
  draws: number;
  strata: StratumStatus[];
}

export interface TrajectoryPoint {
  draw_index: number;
  stratum: number;
  p_fisher: number;
  p_intersection: number;
}

export interface CardBody {
  stratum: number;
  mvr: string | number;
  cvr?: string | number;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: unknown) {
    super(`service responded ${status}`);
  }
}

async function parse(res: Response): Promise<unknown> {
  const body = await res.json().catch(() => null);
  if (!res.ok) {
    const detail = (body as { detail?: unknown } | null)?.detail ?? body;
    throw new ApiError(res.status, detail);
  }
  return body;
}

export class AuditApi {
  constructor(private base: string) {}

  async createSession(config: SessionConfig): Promise<string> {
    const res = await fetch(`${this.base}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    });
    const body = (await parse(res)) as { session_id: string };
    return body.session_id;
  }

  async getSession(id: string): Promise<SessionStatus> {
    const res = await fetch(`${this.base}/sessions/${id}`);
    return (await parse(res)) as SessionStatus;
  }

  async postCard(
    id: string,
    card: CardBody,
    idempotencyKey?: string,
  ): Promise<SessionStatus> {
    const headers: Record<string, string> = {
      "content-type": "application/json",
    };
    if (idempotencyKey) headers["idempotency-key"] = idempotencyKey;
    const res = await fetch(`${this.base}/sessions/${id}/cards`, {
      method: "POST",
      headers,
      body: JSON.stringify(card),
    });
    return (await parse(res)) as SessionStatus;
  }

  async getTrajectory(id: string): Promise<TrajectoryPoint[]> {
    const res = await fetch(`${this.base}/sessions/${id}/trajectory`);
    return (await parse(res)) as TrajectoryPoint[];
  }

  async deleteSession(id: string): Promise<unknown> {
    const res = await fetch(`${this.base}/sessions/${id}`, { method: "DELETE" });
    return parse(res);
  }
}
