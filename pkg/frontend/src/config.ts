// Session setup form: rows of stratum descriptions typed by the operator,
// turned into the JSON body the service expects.

import type { SessionConfig, StratumConfig } from "./api.js";

export interface StratumFormRow {
  size: string;
  kind: "polling" | "comparison";
  margin: string;
  method: "alpha_st" | "alpha_ub" | "eb";
}

export interface SetupForm {
  riskLimit: string;
  rows: StratumFormRow[];
}

export function defaultForm(): SetupForm {
  return {
    riskLimit: "0.05",
    rows: [
      { size: "", kind: "comparison", margin: "", method: "alpha_ub" },
      { size: "", kind: "polling", margin: "", method: "alpha_st" },
    ],
  };
}

export interface FormProblem {
  row: number | null;
  message: string;
}

export function validateForm(form: SetupForm): FormProblem[] {
  const problems: FormProblem[] = [];
  const risk = Number(form.riskLimit);
  if (!(risk > 0 && risk < 1)) {
    problems.push({ row: null, message: "risk limit must be between 0 and 1" });
  }
  if (form.rows.length !== 2) {
    problems.push({
      row: null,
      message: "the grid engine audits exactly two strata",
    });
  }
  form.rows.forEach((row, i) => {
    const size = Number(row.size);
    if (!Number.isInteger(size) || size <= 0) {
      problems.push({ row: i, message: "stratum size must be a positive count" });
    }
    const margin = Number(row.margin);
    if (row.margin.trim() === "" || !(margin >= -1 && margin <= 1)) {
      problems.push({
        row: i,
        message: "reported diluted margin must lie in [-1, 1]",
      });
    }
  });
  return problems;
}

export function buildConfig(form: SetupForm): SessionConfig {
  const problems = validateForm(form);
  if (problems.length) {
    throw new Error(problems.map((p) => p.message).join("; "));
  }
  const strata: StratumConfig[] = form.rows.map((row, i) => ({
    sid: i + 1,
    size: Number(row.size),
    kind: row.kind,
    reported_margin: Number(row.margin),
    method: row.method,
  }));
  return {
    strata,
    risk_limit: Number(form.riskLimit),
    selector_rule: "proportional",
    maximizer: "grid",
    headline: "intersection",
  };
}
