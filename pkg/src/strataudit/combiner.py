"""Pooling per-stratum evidence and maximizing risk over the null union.

Two pooling rules:

* Fisher: -2 sum log p_k is dominated by a chi-squared with 2K degrees
  of freedom when strata are independent.
* Intersection supermartingale: the product of per-stratum
  supermartingales is itself a supermartingale, so 1 /\\ prod M^{-1} is a
  valid P-value.

The union of intersection nulls is the half-space w.theta <= 1/2 cut to
the box [0, u_A].  Both pooled P-values are componentwise monotone in
theta, so the maximum lives on the boundary: a 1-D grid for two strata,
a linear program (exploiting EB log-linearity) for any number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assorter import POLLING, AssorterSpec
from .martingale import GridPanel
from .simplex import InfeasibleLP, LpResult, UnboundedLP, lp_solve

__all__ = [
    "CombinedRisk",
    "NullGrid",
    "NullPoint",
    "build_null_grid",
    "chi2_even_df_survival",
    "fisher_pvalue",
    "grid_trace_rows",
    "intersection_pvalue",
    "lp_max_fisher_eb",
    "lp_max_intersection_eb",
    "lp_solve",
    "LpResult",
    "InfeasibleLP",
    "UnboundedLP",
    "max_p_over_grid",
    "null_point",
    "pooled_pvalues",
]

FISHER = "fisher"
INTERSECTION = "intersection"

_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class NullPoint:
    """One hypothesized vector of stratum means and its test-scale twin."""

    theta: np.ndarray
    beta: np.ndarray
    feasible: bool


@dataclass
class CombinedRisk:
    """Maximized P-values over the null union, with their argmaxes."""

    p_fisher: float | None = None
    p_intersection: float | None = None
    argmax_fisher: NullPoint | None = None
    argmax_intersection: NullPoint | None = None
    per_point: np.ndarray | None = None


def null_point(theta, weights, specs: list[AssorterSpec]) -> NullPoint:
    """Build a NullPoint, translating theta per stratum and checking
    feasibility (box plus half-space) from scratch.

    Out-of-box theta values are translated anyway (they arise as vacuous
    superset points on the boundary grid) and flagged infeasible.
    """
    theta = np.asarray(theta, dtype=float)
    beta = np.array(
        [
            t + (0.0 if s.kind == POLLING else s.upper_bound_original - s.reported_mean)
            for t, s in zip(theta, specs)
        ]
    )
    u_a = np.array([s.upper_bound_original for s in specs])
    feasible = bool(
        np.all(theta >= -_FEAS_TOL)
        and np.all(theta <= u_a + _FEAS_TOL)
        and float(np.dot(weights, theta)) <= 0.5 + _FEAS_TOL
    )
    return NullPoint(theta=theta, beta=beta, feasible=feasible)


class NullGrid:
    """Equispaced nulls on the boundary w.theta = 1/2, for two strata.

    Stored columnar: ``theta`` and ``beta`` are (G, K) arrays.  The
    default resolution is 2 max(N_1, N_2), one point per attainable
    discrete mean.  If the boundary segment leaves the theta box it is
    clipped, and the all-upper-bounds corner is appended whenever the
    whole box is feasible (degenerate configurations only).
    """

    def __init__(self, sizes, specs: list[AssorterSpec], g: int | None = None):
        sizes = np.asarray(sizes, dtype=np.int64)
        if len(sizes) != 2 or len(specs) != 2:
            raise ValueError("grid maximization covers exactly two strata")
        self.sizes = sizes
        self.specs = specs
        self.weights = sizes / sizes.sum()
        u_a = np.array([s.upper_bound_original for s in specs])
        w1, w2 = self.weights
        eps1 = 1.0 / (2.0 * sizes[0])
        self.resolution = int(g) if g is not None else 2 * int(sizes.max())
        lo = eps1
        hi = 0.5 / w1 - eps1
        if hi < lo:
            raise ValueError("boundary segment empty; no testable null")
        # The segment may leave the theta box when stratum bounds or
        # weights are asymmetric.  Points beyond the box are vacuous
        # intersection nulls; keeping them is a superset of the union,
        # which can only raise the maximized P-value (conservative).
        t1 = np.linspace(lo, hi, self.resolution)
        t2 = (0.5 - w1 * t1) / w2
        theta = np.column_stack([t1, t2])
        if float(np.dot(self.weights, u_a)) <= 0.5:
            theta = np.vstack([theta, u_a])
        self.theta = theta
        self.feasible = (theta <= u_a[None, :] + _FEAS_TOL).all(axis=1)
        self.beta = np.empty_like(theta)
        for k, spec in enumerate(specs):
            shift = (
                0.0
                if spec.kind == "polling"
                else spec.upper_bound_original - spec.reported_mean
            )
            self.beta[:, k] = theta[:, k] + shift

    def __len__(self) -> int:
        return len(self.theta)

    def point(self, i: int) -> NullPoint:
        return null_point(self.theta[i], self.weights, self.specs)


def build_null_grid(sizes, specs, g: int | None = None) -> NullGrid:
    return NullGrid(sizes, specs, g)


def chi2_even_df_survival(x, k: int):
    """Survival function of chi-squared with 2k degrees of freedom.

    Closed form for even df: P(X > x) = exp(-x/2) sum_{j<k} (x/2)^j / j!,
    evaluated in log space so large statistics do not overflow.
    Accepts scalars or arrays; monotone decreasing in x.
    """
    if k < 1:
        raise ValueError("need at least one stratum")
    x_arr = np.asarray(x, dtype=float)
    scalar = x_arr.ndim == 0
    x_arr = np.atleast_1d(x_arr)
    if np.any(x_arr < 0):
        raise ValueError("chi-squared statistic must be nonnegative")
    out = np.empty_like(x_arr)
    finite = np.isfinite(x_arr)
    out[~finite] = 0.0
    xf = x_arr[finite]
    if k == 1:
        out[finite] = np.exp(-xf / 2.0)
    elif k == 2:
        half = xf / 2.0
        out[finite] = np.exp(-half) * (1.0 + half)
    else:
        half = xf / 2.0
        with np.errstate(divide="ignore"):
            log_half = np.log(half)
        js = np.arange(k)
        lgam = np.array([math.lgamma(j + 1.0) for j in js])
        # logsumexp over j of j*log(x/2) - log j!
        with np.errstate(invalid="ignore"):
            terms = np.where(
                (half[:, None] == 0.0) & (js[None, :] == 0),
                0.0,
                js[None, :] * log_half[:, None] - lgam[None, :],
            )
        peak = terms.max(axis=1)
        logsum = peak + np.log(np.exp(terms - peak[:, None]).sum(axis=1))
        out[finite] = np.exp(np.minimum(0.0, logsum - half))
    return float(out[0]) if scalar else out


def fisher_pvalue(p) -> float:
    """Fisher's combined P-value for independent per-stratum P-values."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("P-values must lie in [0, 1]")
    if np.any(p == 0):
        return 0.0
    stat = -2.0 * float(np.sum(np.log(p)))
    return float(chi2_even_df_survival(stat, len(p)))


def intersection_pvalue(log_m) -> float:
    """1 /\\ product of reciprocal supermartingales, from log values."""
    log_m = np.asarray(log_m, dtype=float)
    total = float(np.sum(log_m))
    if math.isinf(total) and total > 0:
        return 0.0
    if total <= 0:
        return 1.0
    return min(1.0, math.exp(-total))


def pooled_pvalues(panels: list[GridPanel]) -> tuple[np.ndarray, np.ndarray]:
    """Per-grid-point intersection and Fisher P-values from stratum panels."""
    log_sum = np.zeros(panels[0].size)
    fisher_stat = np.zeros(panels[0].size)
    for panel in panels:
        lm = np.where(panel.certain, np.inf, panel.log_m)
        log_sum = log_sum + lm
        fisher_stat = fisher_stat + np.maximum(0.0, lm)
    p_int = np.where(
        np.isposinf(log_sum),
        0.0,
        np.minimum(1.0, np.exp(-np.clip(log_sum, -709.0, 709.0))),
    )
    p_fis = chi2_even_df_survival(2.0 * fisher_stat, len(panels))
    return p_int, p_fis


def max_p_over_grid(
    panels: list[GridPanel],
    grid: NullGrid,
    combine: str = "both",
    keep_trace: bool = False,
) -> CombinedRisk:
    """Maximize the pooled P-value over the null grid.

    ``panels`` holds one upper-sided GridPanel per stratum, aligned with
    the grid's points.
    """
    if len(grid) == 0:
        raise ValueError("empty null grid")
    p_int, p_fis = pooled_pvalues(panels)
    out = CombinedRisk()
    if combine in ("both", INTERSECTION):
        i = int(np.argmax(p_int))
        out.p_intersection = float(p_int[i])
        out.argmax_intersection = grid.point(i)
    if combine in ("both", FISHER):
        i = int(np.argmax(p_fis))
        out.p_fisher = float(p_fis[i])
        out.argmax_fisher = grid.point(i)
    if keep_trace:
        out.per_point = np.column_stack([p_fis, p_int])
    return out


def _check_affine(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b < -1e-9):
        raise ValueError("affine slopes must be nonnegative")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("affine coefficients must be finite")
    return a, np.maximum(b, 0.0)


def lp_max_intersection_eb(a, b, weights, u_a) -> CombinedRisk:
    """Maximize the intersection P-value when log M_k = a_k - b_k theta_k.

    Minimizes sum_k (a_k - b_k theta_k) over the null union; since each
    b_k >= 0 this is a bounded LP whose optimum yields
    P* = 1 /\\ exp(-optimum).
    """
    a, b = _check_affine(a, b)
    weights = np.asarray(weights, dtype=float)
    u_a = np.asarray(u_a, dtype=float)
    try:
        res = lp_solve(
            c=-b,
            a_ub=weights.reshape(1, -1),
            b_ub=[0.5],
            bounds=[(0.0, float(ub)) for ub in u_a],
        )
    except InfeasibleLP as exc:  # theta = 0 is always feasible
        raise RuntimeError("null union unexpectedly empty") from exc
    optimum = float(np.sum(a) + res.value)
    p = 1.0 if optimum <= 0 else math.exp(-min(optimum, 709.0))
    # argmax carries theta in both slots; callers with assorter specs
    # re-translate before exporting
    point = NullPoint(theta=res.x, beta=res.x.copy(), feasible=True)
    return CombinedRisk(p_intersection=p, argmax_intersection=point)


def lp_max_fisher_eb(a, b, weights, u_a) -> CombinedRisk:
    """Maximize the Fisher P-value under EB log-linearity.

    Epigraph form: minimize sum_k s_k with s_k >= a_k - b_k theta_k and
    s_k >= 0; the optimum is the smallest attainable Fisher statistic
    over the union, halved.
    """
    a, b = _check_affine(a, b)
    weights = np.asarray(weights, dtype=float)
    u_a = np.asarray(u_a, dtype=float)
    k = len(a)
    c = np.concatenate([np.zeros(k), np.ones(k)])
    rows = []
    rhs = []
    for i in range(k):
        row = np.zeros(2 * k)
        row[i] = -b[i]
        row[k + i] = -1.0
        rows.append(row)
        rhs.append(-a[i])
    half_space = np.concatenate([weights, np.zeros(k)])
    rows.append(half_space)
    rhs.append(0.5)
    bounds = [(0.0, float(ub)) for ub in u_a] + [(0.0, None)] * k
    res = lp_solve(c=c, a_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds)
    theta = res.x[:k]
    p = float(chi2_even_df_survival(2.0 * max(0.0, res.value), k))
    point = NullPoint(theta=theta, beta=theta.copy(), feasible=True)
    return CombinedRisk(p_fisher=p, argmax_fisher=point)


def grid_trace_rows(grid: NullGrid, panels: list[GridPanel]):
    """Rows for the optional trace export: theta, pooled log M, P-values."""
    p_int, p_fis = pooled_pvalues(panels)
    log_sum = np.zeros(len(grid))
    for panel in panels:
        log_sum = log_sum + np.where(panel.certain, np.inf, panel.log_m)
    for i in range(len(grid)):
        yield {
            **{f"theta_{k + 1}": grid.theta[i, k] for k in range(grid.theta.shape[1])},
            "log_m_sum": log_sum[i],
            "p_fisher": p_fis[i],
            "p_intersection": p_int[i],
        }
