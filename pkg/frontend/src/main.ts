// DOM wiring: setup form, keyboard card entry, 1-second polling of the
// session endpoints. All audit math lives server-side.

import { ApiError, AuditApi, SessionStatus, TrajectoryPoint } from "./api.js";
import { buildConfig, defaultForm, SetupForm, validateForm } from "./config.js";
import {
  applyKey,
  describeRejection,
  emptyEntry,
  EntryState,
  needsCvr,
  readyToSubmit,
  toCardBody,
} from "./entry.js";
import { BannerModel } from "./banner.js";
import { buildView } from "./view.js";

const POLL_MS = 1000;

const api = new AuditApi(
  (window as unknown as { STRATAUDIT_BASE?: string }).STRATAUDIT_BASE ??
    "http://127.0.0.1:8717",
);

let sessionId: string | null = null;
let session: SessionStatus | null = null;
let trajectory: TrajectoryPoint[] = [];
let entry: EntryState = emptyEntry();
let lastBanner: BannerModel | null = null;
let form: SetupForm = defaultForm();

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

function renderSetup(): void {
  const problems = validateForm(form);
  el("setup-problems").innerHTML = problems
    .map((p) => `<li>${p.row == null ? "" : `stratum ${p.row + 1}: `}${p.message}</li>`)
    .join("");
  el<HTMLButtonElement>("create-session").disabled = problems.length > 0;
}

function bindSetup(): void {
  const rowsHost = el("strata-rows");
  rowsHost.innerHTML = form.rows
    .map(
      (row, i) => `
      <fieldset data-row="${i}">
        <legend>Stratum ${i + 1}</legend>
        <label>Cards <input data-field="size" value="${row.size}" inputmode="numeric"></label>
        <label>Kind
          <select data-field="kind">
            <option value="comparison"${row.kind === "comparison" ? " selected" : ""}>comparison</option>
            <option value="polling"${row.kind === "polling" ? " selected" : ""}>polling</option>
          </select>
        </label>
        <label>Reported margin <input data-field="margin" value="${row.margin}"></label>
        <label>Risk function
          <select data-field="method">
            ${["alpha_ub", "alpha_st", "eb"]
              .map((m) => `<option value="${m}"${row.method === m ? " selected" : ""}>${m}</option>`)
              .join("")}
          </select>
        </label>
      </fieldset>`,
    )
    .join("");
  rowsHost.querySelectorAll("input,select").forEach((node) => {
    node.addEventListener("input", (ev) => {
      const target = ev.target as HTMLInputElement;
      const rowIdx = Number(target.closest("fieldset")!.dataset.row);
      const field = target.dataset.field as keyof typeof form.rows[number];
      (form.rows[rowIdx] as unknown as Record<string, string>)[field] = target.value;
      renderSetup();
    });
  });
  el<HTMLInputElement>("risk-limit").addEventListener("input", (ev) => {
    form.riskLimit = (ev.target as HTMLInputElement).value;
    renderSetup();
  });
  el("create-session").addEventListener("click", async () => {
    try {
      sessionId = await api.createSession(buildConfig(form));
      el("setup").hidden = true;
      el("console").hidden = false;
      await refresh();
      window.setInterval(refresh, POLL_MS);
    } catch (err) {
      el("setup-problems").innerHTML = `<li>${(err as Error).message}</li>`;
    }
  });
  renderSetup();
}

function renderEntry(): void {
  if (!session) return;
  el("entry-stratum").textContent =
    entry.stratum == null ? "-" : String(entry.stratum);
  el("entry-mvr").textContent = entry.mvr ?? "-";
  const cvrRow = el("entry-cvr-row");
  cvrRow.hidden = !needsCvr(session, entry.stratum);
  el("entry-cvr").textContent = entry.cvr ?? "-";
  el("entry-error").textContent = entry.error ?? "";
  el<HTMLButtonElement>("submit-card").disabled =
    !readyToSubmit(entry, session) || session.status !== "running";
}

function render(): void {
  if (!session) return;
  const view = buildView(session, trajectory, lastBanner);
  lastBanner = view.banner;
  const banner = el("banner");
  banner.className = `banner ${view.banner.kind}${view.banner.flash ? " flash" : ""}`;
  el("banner-headline").textContent = view.banner.headline;
  el("banner-detail").textContent = view.banner.detail;
  el("p-fisher").textContent = view.pFisher;
  el("p-intersection").textContent = view.pIntersection;
  el("chart").innerHTML = view.chartSvg;
  el("counts").innerHTML = view.counts
    .map(
      (c) =>
        `<tr><td>${c.sid}</td><td>${c.drawn}</td><td>${c.size}</td>` +
        `<td>${c.exhausted ? "exhausted" : ""}</td></tr>`,
    )
    .join("");
  renderEntry();
}

async function refresh(): Promise<void> {
  if (!sessionId) return;
  try {
    [session, trajectory] = await Promise.all([
      api.getSession(sessionId),
      api.getTrajectory(sessionId),
    ]);
    render();
  } catch {
    el("banner-detail").textContent = "service unreachable; retrying";
  }
}

async function submitCard(): Promise<void> {
  if (!sessionId || !session || !readyToSubmit(entry, session)) return;
  try {
    session = await api.postCard(sessionId, toCardBody(entry, session));
    trajectory = await api.getTrajectory(sessionId);
    entry = emptyEntry();
    render();
  } catch (err) {
    if (err instanceof ApiError) {
      entry = { ...entry, error: describeRejection(err.status, err.detail) };
      renderEntry();
    }
  }
}

window.addEventListener("DOMContentLoaded", () => {
  bindSetup();
  el("submit-card").addEventListener("click", submitCard);
  window.addEventListener("keydown", (ev) => {
    if (!session || el("console").hidden) return;
    const target = ev.target as HTMLElement;
    if (target.tagName === "INPUT" || target.tagName === "SELECT") return;
    if (ev.key === "Enter") {
      void submitCard();
      return;
    }
    if (ev.key === "Escape") {
      entry = emptyEntry();
      renderEntry();
      return;
    }
    entry = applyKey(entry, ev.key, session);
    renderEntry();
  });
});
