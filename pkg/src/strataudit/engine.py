"""Sequential stratified audit sessions.

A session owns the null set (a two-stratum grid, or affine coefficients
for the LP path), one supermartingale panel per stratum and side, the
stratum selector, and the P-value trajectories.  Cards enter one at a
time; each card updates every null's state, refreshes the maximized
P-values, and may flip the session to stopped.

Sessions are single-writer.  A draw log captures everything needed to
replay a session bit-exactly.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import combiner as comb
from .assorter import (
    COMPARISON,
    POLLING,
    AssorterSpec,
    overstatement_assorter,
    reported_mean_from_margin,
    null_mean_on_test_scale,
)
from .martingale import (
    EB,
    METHODS,
    AffinePanel,
    GridPanel,
    MethodConfig,
)
from .population import ConfigurationError, PopulationSampler
from .selector import LOWER_SIDED, PROPORTIONAL, RULES, AuditComplete, SelectorState

GRID = "grid"
LP = "lp"


class SessionStopped(Exception):
    """A card was offered to a session that has already stopped."""


class IngestError(ValueError):
    """Card rejected: bad stratum, missing CVR, or exhausted stratum."""


@dataclass
class StratumSpec:
    """Static description of one stratum in an audit."""

    sid: int
    size: int
    kind: str
    u_a: float = 1.0
    reported_mean: float | None = None
    reported_margin: float | None = None
    method: str = "alpha_st"
    method_config: MethodConfig = field(default_factory=MethodConfig)

    def __post_init__(self):
        if self.reported_mean is None and self.reported_margin is not None:
            self.reported_mean = reported_mean_from_margin(
                self.reported_margin, self.u_a
            )
        if self.kind == COMPARISON and self.reported_mean is None:
            raise ConfigurationError(
                f"stratum {self.sid}: comparison audits need a reported "
                "mean or margin"
            )
        if self.method not in METHODS:
            raise ConfigurationError(f"stratum {self.sid}: unknown method")

    def assorter_spec(self) -> AssorterSpec:
        if self.kind == COMPARISON:
            return AssorterSpec(COMPARISON, self.u_a, self.reported_mean)
        # a polling stratum's reported mean is bet-anchoring metadata only
        return AssorterSpec(POLLING, self.u_a)

    def bet_config(self) -> MethodConfig:
        """Method config with the initial-bet default resolved.

        Comparison strata bet toward the test-scale upper bound (the
        overstatement assorter concentrates at u/2, and aggressive bets
        win when the system behaved).  Polling strata anchor the initial
        bet at the reported assorter mean when one is known; an all-in
        default would forfeit the martingale on the first loser ballot.
        """
        cfg = self.method_config
        if (
            cfg.tau_0 is None
            and self.kind == POLLING
            and self.reported_mean is not None
        ):
            from dataclasses import replace

            cfg = replace(cfg, tau_0=float(self.reported_mean))
        return cfg

    def to_dict(self) -> dict:
        return {
            "sid": self.sid,
            "size": self.size,
            "kind": self.kind,
            "u_a": self.u_a,
            "reported_mean": self.reported_mean,
            "method": self.method,
            "method_config": {
                "d": self.method_config.d,
                "tau_0": self.method_config.tau_0,
                "f": self.method_config.f,
                "lambda_max": self.method_config.lambda_max,
                "alpha_for_lambda": self.method_config.alpha_for_lambda,
                "eps": self.method_config.eps,
                "variance_floor": self.method_config.variance_floor,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StratumSpec":
        mc = d.get("method_config") or {}
        return cls(
            sid=int(d["sid"]),
            size=int(d["size"]),
            kind=d["kind"],
            u_a=float(d.get("u_a", 1.0)),
            reported_mean=d.get("reported_mean"),
            reported_margin=d.get("reported_margin"),
            method=d.get("method", "alpha_st"),
            method_config=MethodConfig(
                **{k: v for k, v in mc.items() if v is not None}
            ),
        )


@dataclass
class AuditConfig:
    """Everything an audit needs besides the cards themselves."""

    strata: list[StratumSpec]
    risk_limit: float = 0.05
    selector_rule: str = PROPORTIONAL
    maximizer: str = GRID
    headline: str = comb.INTERSECTION
    replacement: bool = False
    seed: int | None = None
    lower_level: float = 0.05
    lp_checkpoint: int = 5000
    grid_resolution: int | None = None
    auto_stop: bool = True

    def __post_init__(self):
        if not 0 < self.risk_limit < 1:
            raise ConfigurationError("risk limit must lie in (0, 1)")
        if self.selector_rule not in RULES:
            raise ConfigurationError(f"unknown selector rule {self.selector_rule!r}")
        if self.maximizer not in (GRID, LP):
            raise ConfigurationError(f"unknown maximizer {self.maximizer!r}")
        if self.headline not in (comb.FISHER, comb.INTERSECTION):
            raise ConfigurationError("headline combiner must be fisher or intersection")
        if self.maximizer == GRID and len(self.strata) != 2:
            raise ConfigurationError("grid maximization requires exactly two strata")
        if self.maximizer == LP:
            if any(s.method != EB for s in self.strata):
                raise ConfigurationError("LP maximization requires EB in every stratum")
            if self.selector_rule == LOWER_SIDED:
                raise ConfigurationError(
                    "LP maximization supports proportional allocation only"
                )

    @property
    def k(self) -> int:
        return len(self.strata)

    def to_dict(self) -> dict:
        return {
            "risk_limit": self.risk_limit,
            "selector_rule": self.selector_rule,
            "maximizer": self.maximizer,
            "headline": self.headline,
            "replacement": self.replacement,
            "seed": self.seed,
            "lower_level": self.lower_level,
            "lp_checkpoint": self.lp_checkpoint,
            "grid_resolution": self.grid_resolution,
            "auto_stop": self.auto_stop,
            "strata": [s.to_dict() for s in self.strata],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AuditConfig":
        return cls(
            strata=[StratumSpec.from_dict(s) for s in d["strata"]],
            risk_limit=float(d.get("risk_limit", 0.05)),
            selector_rule=d.get("selector_rule", PROPORTIONAL),
            maximizer=d.get("maximizer", GRID),
            headline=d.get("headline", comb.INTERSECTION),
            replacement=bool(d.get("replacement", False)),
            seed=d.get("seed"),
            lower_level=float(d.get("lower_level", 0.05)),
            lp_checkpoint=int(d.get("lp_checkpoint", 5000)),
            grid_resolution=d.get("grid_resolution"),
            auto_stop=bool(d.get("auto_stop", True)),
        )


@dataclass
class DrawRecord:
    stratum: int  # 1-based sid
    test_value: float
    mvr: float | None = None
    cvr: float | None = None
    ts: float | None = None


@dataclass
class StoppingRecord:
    stopped: bool
    status: str
    workload: int
    consumed_by_stratum: np.ndarray
    physical_total: int
    physical_by_stratum: np.ndarray
    p_fisher: float | None
    p_intersection: float | None


class AuditSession:
    """Live state of one stratified audit."""

    def __init__(self, config: AuditConfig, population=None, grid=None):
        self.config = config
        self.specs = [s.assorter_spec() for s in config.strata]
        self.sizes = np.array([s.size for s in config.strata], dtype=np.int64)
        self.weights = self.sizes / self.sizes.sum()
        self.u_test = np.array([sp.upper_bound_test for sp in self.specs])
        self.u_a = np.array([sp.upper_bound_original for sp in self.specs])
        self.population = population
        self.sampler = (
            PopulationSampler(population, config.seed) if population is not None else None
        )
        n_for_state = None if config.replacement else self.sizes
        self.status = "running"
        self.draw_log: list[DrawRecord] = []
        self.trajectory: list[dict] = []
        self._draws_since_solve = 0

        if config.maximizer == GRID:
            self.grid = grid if grid is not None else comb.NullGrid(
                self.sizes, self.specs, config.grid_resolution
            )
            self.panels = [
                GridPanel(
                    method=s.method,
                    u=float(self.u_test[k]),
                    beta=self.grid.beta[:, k],
                    n_total=None if config.replacement else int(self.sizes[k]),
                    config=s.bet_config(),
                )
                for k, s in enumerate(config.strata)
            ]
            n_nulls = len(self.grid)
        else:
            self.grid = None
            self.panels = None
            self.affine = [
                AffinePanel(
                    u=float(self.u_test[k]),
                    n_total=None if config.replacement else int(self.sizes[k]),
                    config=s.bet_config(),
                )
                for k, s in enumerate(config.strata)
            ]
            n_nulls = 1

        self.selector = SelectorState(
            rule=config.selector_rule,
            sizes=self.sizes,
            n_nulls=n_nulls,
            level=config.lower_level,
        )
        if config.selector_rule == LOWER_SIDED:
            self.lower_panels = [
                GridPanel(
                    method=s.method,
                    u=float(self.u_test[k]),
                    beta=self.grid.beta[:, k],
                    n_total=None if config.replacement else int(self.sizes[k]),
                    config=s.bet_config(),
                    reflect=True,
                )
                for k, s in enumerate(config.strata)
            ]
        else:
            self.lower_panels = None
        self.alive = np.ones(n_nulls, dtype=bool)
        self.risk = self._evaluate(force=True)

    # -- bookkeeping -----------------------------------------------------

    def _sid_to_index(self, sid: int) -> int:
        for k, s in enumerate(self.config.strata):
            if s.sid == sid:
                return k
        raise IngestError(f"unknown stratum id {sid}")

    def stratum_drawn(self) -> np.ndarray:
        return self.selector.counts.copy()

    def stratum_exhausted(self, k: int) -> bool:
        if self.config.replacement:
            return False
        return int(self.selector.counts[k]) >= int(self.sizes[k])

    def _exhausted_flags(self) -> np.ndarray:
        return np.array([self.stratum_exhausted(k) for k in range(self.config.k)])

    # -- risk evaluation ---------------------------------------------------

    def _evaluate(self, force: bool = False) -> comb.CombinedRisk:
        if self.config.maximizer == GRID:
            p_int_arr, p_fis_arr = comb.pooled_pvalues(self.panels)
            headline_arr = (
                p_int_arr if self.config.headline == comb.INTERSECTION else p_fis_arr
            )
            self.alive &= headline_arr > self.config.risk_limit
            risk = comb.CombinedRisk(
                p_fisher=float(p_fis_arr.max()),
                p_intersection=float(p_int_arr.max()),
                argmax_fisher=self.grid.point(int(np.argmax(p_fis_arr))),
                argmax_intersection=self.grid.point(int(np.argmax(p_int_arr))),
            )
            return risk
        # LP path: re-derive affine coefficients and solve
        if not force and self._draws_since_solve < self.config.lp_checkpoint:
            return self.risk
        self._draws_since_solve = 0
        a = np.empty(self.config.k)
        b = np.empty(self.config.k)
        for k, (panel, spec) in enumerate(zip(self.affine, self.specs)):
            lm0 = panel.log_m(null_mean_on_test_scale(0.0, spec))
            lm1 = panel.log_m(null_mean_on_test_scale(float(self.u_a[k]), spec))
            a[k] = lm0
            b[k] = (lm0 - lm1) / float(self.u_a[k])
            mid = panel.log_m(null_mean_on_test_scale(float(self.u_a[k]) / 2.0, spec))
            if not math.isclose(
                mid, a[k] - b[k] * self.u_a[k] / 2.0, rel_tol=1e-9, abs_tol=1e-8
            ):
                raise RuntimeError("supermartingale log value is not affine in the null")
        ri = comb.lp_max_intersection_eb(a, b, self.weights, self.u_a)
        rf = comb.lp_max_fisher_eb(a, b, self.weights, self.u_a)
        return comb.CombinedRisk(
            p_fisher=rf.p_fisher,
            p_intersection=ri.p_intersection,
            argmax_fisher=comb.null_point(
                rf.argmax_fisher.theta, self.weights, self.specs
            ),
            argmax_intersection=comb.null_point(
                ri.argmax_intersection.theta, self.weights, self.specs
            ),
        )

    def headline_p(self) -> float:
        if self.config.headline == comb.FISHER:
            return self.risk.p_fisher
        return self.risk.p_intersection

    # -- the two public mutations ------------------------------------------

    def recommended_stratum(self) -> tuple[int, str]:
        """Next stratum to pull a card from (1-based sid) plus rationale."""
        if self.status == "stopped":
            raise AuditComplete("risk limit met; audit complete")
        try:
            k = self.selector.choose(self._exhausted_flags(), self.alive)
        except AuditComplete:
            raise
        counts = self.selector.counts
        if self.config.selector_rule == LOWER_SIDED:
            consumable = self.selector.stratum_consumable(self.alive)
            rationale = (
                f"lower-sided rule: consumable strata "
                f"{[self.config.strata[i].sid for i in np.flatnonzero(consumable)]}, "
                f"sampled fractions {[f'{c}/{n}' for c, n in zip(counts, self.sizes)]}"
            )
        else:
            rationale = (
                "proportional rule: sampled fractions "
                f"{[f'{c}/{n}' for c, n in zip(counts, self.sizes)]}"
            )
        return self.config.strata[k].sid, rationale

    def ingest_card(
        self,
        sid: int,
        mvr_value: float,
        cvr_value: float | None = None,
        ts: float | None = None,
    ) -> comb.CombinedRisk:
        """Consume one manually interpreted card.

        Values are on the original assorter scale.  Comparison strata
        require the matching CVR value; the overstatement assorter is
        applied here.
        """
        k = self._sid_to_index(sid)
        spec = self.specs[k]
        if spec.kind == COMPARISON:
            if cvr_value is None:
                raise IngestError(f"stratum {sid} is a comparison stratum; CVR needed")
            test_value = overstatement_assorter(
                cvr_value, mvr_value, spec.upper_bound_original
            ).b_value
        else:
            if not 0 <= mvr_value <= spec.upper_bound_original:
                raise IngestError(
                    f"value {mvr_value} outside [0, {spec.upper_bound_original}]"
                )
            test_value = float(mvr_value)
        return self._ingest_test_value(
            k, test_value, mvr=mvr_value, cvr=cvr_value, ts=ts
        )

    def _ingest_test_value(
        self,
        k: int,
        test_value: float,
        mvr: float | None = None,
        cvr: float | None = None,
        ts: float | None = None,
    ) -> comb.CombinedRisk:
        if self.status == "stopped":
            raise SessionStopped("session already stopped")
        if self.stratum_exhausted(k):
            raise IngestError(f"stratum {self.config.strata[k].sid} is exhausted")
        self.selector.record_draw(k, self.alive)
        if self.config.maximizer == GRID:
            self.panels[k].frozen = self.selector.masks[:, k]
            self.panels[k].update(test_value)
            if self.lower_panels is not None:
                lp = self.lower_panels[k]
                lp.update(test_value)
                newly = lp.rejected(self.config.lower_level) & ~self.selector.masks[:, k]
                if newly.any():
                    self.selector.apply_masks(k, newly)
        else:
            self.affine[k].update(test_value)
            self._draws_since_solve += 1
        self.risk = self._evaluate()
        self.draw_log.append(
            DrawRecord(
                stratum=self.config.strata[k].sid,
                test_value=test_value,
                mvr=mvr,
                cvr=cvr,
                ts=time.time() if ts is None else ts,
            )
        )
        if self.config.maximizer == GRID or self._draws_since_solve == 0:
            self.trajectory.append(
                {
                    "draw_index": len(self.draw_log),
                    "stratum": self.config.strata[k].sid,
                    "p_fisher": self.risk.p_fisher,
                    "p_intersection": self.risk.p_intersection,
                }
            )
        if self.config.auto_stop and self.headline_p() <= self.config.risk_limit:
            self.status = "stopped"
        return self.risk

    # -- simulation driver ---------------------------------------------------

    def run_to_completion(self, budget: int | None = None) -> StoppingRecord:
        """Draw from the attached population until stop, budget, or exhaustion."""
        if self.sampler is None:
            raise ConfigurationError("no population attached")
        while self.status == "running":
            if budget is not None and len(self.draw_log) >= budget:
                break
            try:
                sid, _ = self.recommended_stratum()
            except AuditComplete:
                self.status = "exhausted" if self.status == "running" else self.status
                break
            k = self._sid_to_index(sid)
            x = self.sampler.draw(k)
            self._ingest_test_value(k, x, ts=float(len(self.draw_log)))
        w = self.selector.workload()
        return StoppingRecord(
            stopped=self.status == "stopped",
            status=self.status,
            workload=w["consumed_total"],
            consumed_by_stratum=w["consumed_by_stratum"],
            physical_total=w["physical_total"],
            physical_by_stratum=w["physical_by_stratum"],
            p_fisher=self.risk.p_fisher,
            p_intersection=self.risk.p_intersection,
        )

    # -- snapshot / replay -----------------------------------------------------

    def snapshot(self) -> dict:
        """JSON-ready session image: config, draw log, trajectories."""
        return {
            "config": self.config.to_dict(),
            "status": self.status,
            "draw_log": [
                {
                    "stratum": r.stratum,
                    "test_value": r.test_value,
                    "mvr": r.mvr,
                    "cvr": r.cvr,
                    "ts": r.ts,
                }
                for r in self.draw_log
            ],
            "trajectory": self.trajectory,
            "p_fisher": self.risk.p_fisher,
            "p_intersection": self.risk.p_intersection,
        }

    def snapshot_json(self) -> str:
        return json.dumps(self.snapshot(), indent=2, sort_keys=True)


def create_session(config: AuditConfig, population=None, grid=None) -> AuditSession:
    return AuditSession(config, population=population, grid=grid)


def replay(snapshot: dict) -> AuditSession:
    """Rebuild a session from its snapshot by replaying the draw log."""
    config = AuditConfig.from_dict(snapshot["config"])
    session = AuditSession(config)
    for rec in snapshot["draw_log"]:
        k = session._sid_to_index(int(rec["stratum"]))
        session._ingest_test_value(
            k,
            float(rec["test_value"]),
            mvr=rec.get("mvr"),
            cvr=rec.get("cvr"),
            ts=rec.get("ts"),
        )
    return session
