"""Audit-session HTTP API for the operator console.

Sessions live in memory, guarded by per-session locks, and are
snapshotted to disk on every mutation; on startup, snapshots are
replayed through the engine, so a restart reconstructs identical state.
All endpoints speak JSON.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, Header, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .assorter import plurality_assorter
from .engine import AuditConfig, AuditSession, SessionStopped, IngestError, replay
from .population import ConfigurationError
from .selector import AuditComplete


class StratumBody(BaseModel):
    sid: int
    size: int
    kind: str
    u_a: float = 1.0
    reported_mean: float | None = None
    reported_margin: float | None = None
    method: str = "alpha_st"


class SessionBody(BaseModel):
    strata: list[StratumBody]
    risk_limit: float = 0.05
    selector_rule: str = "proportional"
    maximizer: str = "grid"
    headline: str = "intersection"
    grid_resolution: int | None = Field(default=None, ge=2)


class CardBody(BaseModel):
    stratum: int
    mvr: str | float
    cvr: str | float | None = None


def _as_assorter_value(value, what: str) -> float:
    if isinstance(value, str):
        label = value.strip().lower()
        if label not in ("winner", "loser", "other"):
            raise HTTPException(
                422, detail=[{"loc": [what], "msg": f"unknown vote label {value!r}"}]
            )
        return plurality_assorter(label)
    return float(value)


class SessionStore:
    """In-memory sessions plus on-disk snapshots."""

    def __init__(self, state_dir: Path | None):
        self.state_dir = Path(state_dir) if state_dir else None
        self.sessions: dict[str, AuditSession] = {}
        self.locks: dict[str, threading.Lock] = {}
        self.idempotency: dict[str, dict[str, dict]] = {}
        if self.state_dir:
            self.state_dir.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.state_dir.glob("*.json")):
                data = json.loads(path.read_text())
                sid = data["session_id"]
                self.sessions[sid] = replay(data["snapshot"])
                self.locks[sid] = threading.Lock()
                self.idempotency[sid] = data.get("idempotency", {})

    def persist(self, sid: str) -> None:
        if not self.state_dir:
            return
        payload = {
            "session_id": sid,
            "snapshot": self.sessions[sid].snapshot(),
            "idempotency": self.idempotency.get(sid, {}),
        }
        tmp = self.state_dir / f".{sid}.tmp"
        tmp.write_text(json.dumps(payload))
        tmp.replace(self.state_dir / f"{sid}.json")

    def drop(self, sid: str) -> None:
        self.sessions.pop(sid, None)
        self.locks.pop(sid, None)
        self.idempotency.pop(sid, None)
        if self.state_dir:
            (self.state_dir / f"{sid}.json").unlink(missing_ok=True)


def session_payload(session: AuditSession) -> dict:
    try:
        rec_sid, rationale = session.recommended_stratum()
    except AuditComplete as exc:
        rec_sid, rationale = None, str(exc)
    return {
        "status": session.status,
        "p_fisher": session.risk.p_fisher,
        "p_intersection": session.risk.p_intersection,
        "counts": {
            str(s.sid): int(n)
            for s, n in zip(session.config.strata, session.selector.counts)
        },
        "recommended_stratum": rec_sid,
        "rationale": rationale,
        "risk_limit": session.config.risk_limit,
        "headline": session.config.headline,
        "draws": len(session.draw_log),
        "strata": [
            {
                "sid": s.sid,
                "size": s.size,
                "kind": s.kind,
                "method": s.method,
                "exhausted": session.stratum_exhausted(k),
            }
            for k, s in enumerate(session.config.strata)
        ],
    }


def create_app(state_dir=None) -> FastAPI:
    app = FastAPI(title="strataudit session service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = SessionStore(state_dir)
    app.state.store = store

    def _get(sid: str) -> AuditSession:
        session = store.sessions.get(sid)
        if session is None:
            raise HTTPException(404, detail=f"no session {sid}")
        return session

    @app.get("/health")
    def health():
        return {"ok": True, "sessions": len(store.sessions)}

    @app.post("/sessions", status_code=201)
    def create_session_endpoint(body: SessionBody):
        try:
            config = AuditConfig.from_dict(
                {
                    "strata": [s.model_dump() for s in body.strata],
                    "risk_limit": body.risk_limit,
                    "selector_rule": body.selector_rule,
                    "maximizer": body.maximizer,
                    "headline": body.headline,
                    "grid_resolution": body.grid_resolution,
                    "lp_checkpoint": 1,  # live sessions re-solve per card
                }
            )
            session = AuditSession(config)
        except (ConfigurationError, ValueError) as exc:
            raise HTTPException(422, detail=[{"loc": ["config"], "msg": str(exc)}])
        sid = uuid.uuid4().hex[:12]
        store.sessions[sid] = session
        store.locks[sid] = threading.Lock()
        store.idempotency[sid] = {}
        store.persist(sid)
        return {"session_id": sid}

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        return session_payload(_get(sid))

    @app.post("/sessions/{sid}/cards")
    def post_card(
        sid: str,
        body: CardBody,
        idempotency_key: str | None = Header(default=None),
    ):
        session = _get(sid)
        with store.locks[sid]:
            if idempotency_key and idempotency_key in store.idempotency[sid]:
                return store.idempotency[sid][idempotency_key]
            mvr = _as_assorter_value(body.mvr, "mvr")
            cvr = None if body.cvr is None else _as_assorter_value(body.cvr, "cvr")
            try:
                session.ingest_card(body.stratum, mvr, cvr)
            except SessionStopped:
                raise HTTPException(409, detail="session already stopped")
            except IngestError as exc:
                raise HTTPException(422, detail=[{"loc": ["card"], "msg": str(exc)}])
            payload = session_payload(session)
            if idempotency_key:
                store.idempotency[sid][idempotency_key] = payload
            store.persist(sid)
            return payload

    @app.get("/sessions/{sid}/trajectory")
    def get_trajectory(sid: str):
        return _get(sid).trajectory

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str):
        session = _get(sid)
        snapshot = session.snapshot()
        store.drop(sid)
        return snapshot

    return app
