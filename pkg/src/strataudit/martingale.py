"""Within-stratum betting supermartingales for bounded populations.

Three test supermartingales are implemented, all nonnegative and starting
at 1 under the null that the stratum mean is at most a given value:

* ``ALPHA_ST``: betting martingale with a shrink-truncate estimate of the
  alternative mean as the bet.
* ``ALPHA_UB``: same, with the bet biased toward the upper bound by a
  weight proportional to the inverse running sample variance.  Sharper
  for comparison audits, where values concentrate on a point mass.
* ``EB``: empirical-Bernstein supermartingale with predictable-mixture
  bets.  Its log is affine in the null mean, which is what makes
  maximization over many strata a linear program.

Sampling without replacement is handled by conditioning the null mean on
the sum of prior draws.  Lower-sided tests (null: mean at least beta) run
the same machinery on reflected values.

All bets are predictable: they are computed from the state before the
next draw is observed, and the update order enforces that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

ALPHA_ST = "alpha_st"
ALPHA_UB = "alpha_ub"
EB = "eb"

METHODS = (ALPHA_ST, ALPHA_UB, EB)

UPPER = "upper"
LOWER = "lower"

MACHINE_DELTA = 2.220446e-16
# Relative variance floor for the upward-bias weight, as a fraction of u^2.
# Calibrated against the deterministic no-error comparison workloads.
VARIANCE_FLOOR_FRAC = 1.75e-2

# Scale estimate driving the EB wager: before two draws exist the running
# standard deviation is taken as 1/4 (the [0,1] default), afterwards the
# sample standard deviation floored at 0.01.
EB_SD_DEFAULT = 0.25
EB_SD_MIN = 0.01


class ExhaustionError(Exception):
    """More draws consumed than the stratum holds."""


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class MethodConfig:
    """Tuning parameters shared by the supermartingale methods.

    ``None`` fields resolve against the stratum's bound and size via
    :meth:`resolve`: the initial bet estimate defaults to just under the
    test-scale upper bound, the truncation epsilon to 1/(2N), and the
    variance floor to ``VARIANCE_FLOOR_FRAC * u**2``.
    """

    d: float = 20.0
    tau_0: float | None = None
    f: float = 0.01
    lambda_max: float = 0.75
    alpha_for_lambda: float = 0.05
    eps: float | None = None
    delta: float = MACHINE_DELTA
    variance_floor: float | None = None

    def __post_init__(self):
        if self.d < 0:
            raise DomainError("shrinkage weight d must be nonnegative")
        if self.f < 0:
            raise DomainError("upward-bias weight f must be nonnegative")
        if not 0 <= self.lambda_max < 1:
            raise DomainError("lambda_max must lie in [0, 1)")
        if not 0 < self.alpha_for_lambda < 1:
            raise DomainError("alpha_for_lambda must lie in (0, 1)")

    def resolve(self, u: float, n_total: int | None) -> "MethodConfig":
        """Fill in stratum-dependent defaults."""
        tau_0 = self.tau_0 if self.tau_0 is not None else u * (1.0 - self.delta)
        if self.eps is not None:
            eps = self.eps
        elif n_total is not None:
            eps = 1.0 / (2.0 * n_total)
        else:
            eps = 0.0
        floor = (
            self.variance_floor
            if self.variance_floor is not None
            else VARIANCE_FLOOR_FRAC * u * u
        )
        return replace(self, tau_0=tau_0, eps=eps, variance_floor=floor)

    def reflected(self, u: float) -> "MethodConfig":
        """Config for the reflected (lower-sided) stream."""
        if self.tau_0 is None:
            raise DomainError("reflect after resolving stratum defaults")
        return replace(self, tau_0=u - self.tau_0)


def conditional_null_mean(
    beta_k: float, n_total: int, sum_prior: float, i: int
) -> float:
    """Null mean of the remaining population just before the i-th draw.

    Sampling without replacement from a population of ``n_total`` values
    whose overall mean is ``beta_k``: after prior draws summing to
    ``sum_prior``, the remaining values average
    ``(n_total * beta_k - sum_prior) / (n_total - (i - 1))``.
    """
    if i > n_total:
        raise ExhaustionError(f"draw {i} from a population of {n_total}")
    return (n_total * beta_k - sum_prior) / (n_total - (i - 1))


def alpha_term(x, mu_i, tau_i, u):
    """One betting-martingale multiplier.

    Y = (x * tau / mu + (u - x) * (u - tau) / (u - mu)) / u, which has
    expectation 1 whenever E[x] = mu.  Degenerate null means (mu <= 0 or
    mu >= u) are handled by the caller, never here.
    """
    return (x * tau_i / mu_i + (u - x) * (u - tau_i) / (u - mu_i)) / u


def shrink_estimate(d: float, tau_0: float, sum_x: float, t: int) -> float:
    """Shrinkage estimate of the stratum mean: prior weight d on tau_0."""
    return (d * tau_0 + sum_x) / (d + t)


def eb_psi(lam: float) -> float:
    """Sub-exponential cumulant bound (-log(1 - lam) - lam) / 4."""
    return (-math.log1p(-lam) - lam) / 4.0


def eb_log_term(x, mu_i, lambda_i, mu_hat_prev):
    """Log multiplier of the empirical-Bernstein supermartingale.

    log Y = lam * (x - mu) - v * psi(lam) with v = 4 (x - mu_hat_prev)^2,
    on the [0,1] scale.  The factor 4 on the variance process is what
    makes the term a supermartingale for [0,1]-bounded draws (the
    exhaustive small-urn expectation check fails without it).  Affine in
    mu with slope -lam, the linearity the LP maximizer relies on.
    """
    if lambda_i >= 1:
        raise DomainError("EB bet must be below 1")
    v = 4.0 * (x - mu_hat_prev) ** 2
    return lambda_i * (x - mu_i) - v * eb_psi(lambda_i)


@dataclass
class MartingaleState:
    """Running state of one (stratum, null, method) supermartingale.

    Value object: callers own their copies.  ``update`` mutates in place
    and returns the state.  ``frozen`` (mask) and ``certain_reject`` are
    absorbing.
    """

    method: str
    u: float
    beta: float
    config: MethodConfig
    n_total: int | None = None
    side: str = UPPER
    log_m: float = 0.0
    t: int = 0
    sum_x: float = 0.0
    welford_mean: float = 0.0
    welford_m2: float = 0.0
    eb_sum: float = 0.0
    frozen: bool = False
    certain_reject: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        if self.config.tau_0 is None or self.config.eps is None:
            self.config = self.config.resolve(self.u, self.n_total)

    # -- predictable quantities (functions of the state only) ----------

    def current_null_mean(self) -> float:
        """Conditional null mean for the next draw (test scale)."""
        if self.n_total is None:
            return self.beta
        return conditional_null_mean(self.beta, self.n_total, self.sum_x, self.t + 1)

    def sample_variance(self) -> float:
        """Floored sample variance of the draws consumed so far."""
        cfg = self.config
        if self.t < 2:
            return cfg.variance_floor
        return max(cfg.variance_floor, self.welford_m2 / (self.t - 1))

    def eb_sd_prev(self) -> float:
        """Running sample SD of the scaled draws, floored; 1/4 before two
        draws exist."""
        if self.t < 2:
            return EB_SD_DEFAULT
        sd = math.sqrt(self.welford_m2 / (self.t - 1)) / self.u
        return max(EB_SD_MIN, sd)

    def bet(self) -> float:
        """The bet for the next draw: a mean estimate for ALPHA methods,
        a wager fraction in [0, lambda_max] for EB."""
        cfg = self.config
        if self.method == EB:
            i = self.t + 1
            raw = math.sqrt(
                2.0
                * math.log(2.0 / cfg.alpha_for_lambda)
                / (self.eb_sd_prev() * i * math.log1p(i))
            )
            return min(cfg.lambda_max, raw)
        raw = shrink_estimate(cfg.d, cfg.tau_0, self.sum_x, self.t)
        if self.method == ALPHA_UB:
            sig2 = self.sample_variance()
            raw = (raw + cfg.f * self.u / sig2) / (1.0 + cfg.f / sig2)
        mu = self.current_null_mean()
        return min(max(raw, mu + cfg.eps), self.u * (1.0 - cfg.delta))

    def eb_mu_hat_prev(self) -> float:
        """Lagged running mean on the [0,1] scale, 1/2-anchored."""
        return (0.5 + self.eb_sum) / (self.t + 1)

    def multiplier(self, x: float) -> float:
        """Would-be multiplier for draw ``x``, without consuming it."""
        mu = self.current_null_mean()
        cfg = self.config
        if self.frozen or self.certain_reject:
            return 1.0
        if mu + cfg.eps >= self.u:
            return 1.0
        if mu <= 0:
            # mean mass exhausted: a positive draw contradicts the null
            # outright; a zero draw is exactly consistent with it
            return math.inf if (mu < 0 or x > 0) else 1.0
        if self.method == EB:
            lam = self.bet()
            return math.exp(
                eb_log_term(x / self.u, mu / self.u, lam, self.eb_mu_hat_prev())
            )
        return alpha_term(x, mu, self.bet(), self.u)

    # -- consuming a draw ----------------------------------------------

    def _accumulate(self, x: float) -> None:
        self.t += 1
        self.sum_x += x
        d = x - self.welford_mean
        self.welford_mean += d / self.t
        self.welford_m2 += d * (x - self.welford_mean)
        self.eb_sum += x / self.u

    def update(self, x: float) -> "MartingaleState":
        """Consume one draw: multiply in the term, then advance the sums."""
        if self.certain_reject:
            return self
        if self.frozen:
            self._accumulate(x)
            return self
        mu = self.current_null_mean()
        cfg = self.config
        if mu + cfg.eps >= self.u:
            # the null still has room for every remaining card: term is 1
            self._accumulate(x)
            return self
        if mu <= 0:
            if mu < 0 or x > 0:
                # prior draws (or this one) exceed the null's total mass
                self.certain_reject = True
                self.log_m = math.inf
            else:
                self._accumulate(x)  # zero draw against zero remaining mass
            return self
        if self.method == EB:
            lam = self.bet()
            self.log_m += eb_log_term(
                x / self.u, mu / self.u, lam, self.eb_mu_hat_prev()
            )
        else:
            self.log_m += math.log(alpha_term(x, mu, self.bet(), self.u))
        self._accumulate(x)
        return self

    def p_value(self) -> float:
        """Anytime-valid P-value 1 /\\ 1/M."""
        if self.certain_reject:
            return 0.0
        return min(1.0, math.exp(-self.log_m))


def make_state(
    method: str,
    u: float,
    beta: float,
    n_total: int | None,
    config: MethodConfig | None = None,
    side: str = UPPER,
) -> MartingaleState:
    """Build a fresh state; lower-sided states reflect data and null."""
    cfg = (config or MethodConfig()).resolve(u, n_total)
    if side == LOWER:
        return MartingaleState(
            method=method,
            u=u,
            beta=u - beta,
            config=cfg.reflected(u),
            n_total=n_total,
            side=LOWER,
        )
    return MartingaleState(
        method=method, u=u, beta=beta, config=cfg, n_total=n_total
    )


def update(state: MartingaleState, x: float) -> MartingaleState:
    """Consume one draw (function form of :meth:`MartingaleState.update`)."""
    return state.update(x)


def alpha_st_bet(state: MartingaleState) -> float:
    """Shrink-truncate bet for the next draw."""
    if state.method != ALPHA_ST:
        raise DomainError("state does not use shrink-truncate bets")
    return state.bet()


def alpha_ub_bet(state: MartingaleState) -> float:
    """Upward-biased bet for the next draw."""
    if state.method != ALPHA_UB:
        raise DomainError("state does not use upward-biased bets")
    return state.bet()


def eb_lambda(state: MartingaleState) -> float:
    """Predictable-mixture wager for the next draw, in [0, lambda_max]."""
    if state.method != EB:
        raise DomainError("state is not an empirical-Bernstein state")
    return state.bet()


def lower_sided_update(state: MartingaleState, x: float) -> MartingaleState:
    """Feed a raw draw to a lower-sided state (reflects internally)."""
    if state.side != LOWER:
        raise DomainError("state is not lower-sided")
    return state.update(state.u - x)


def lower_sided_rejects(state: MartingaleState, level: float = 0.05) -> bool:
    """True once the lower-sided test's P-value is at or below ``level``."""
    return state.p_value() <= level


# ----------------------------------------------------------------------
# Vectorized panels: one stratum, one method, many nulls at once.
# Same math as MartingaleState, vectorized over the null axis; the test
# suite pins the two paths against each other.
# ----------------------------------------------------------------------


@dataclass
class GridPanel:
    """Supermartingale states for a whole null grid in one stratum.

    ``beta`` is the vector of test-scale null means.  Shared draw
    accumulators (sums, variance) advance once per physical draw; only
    ``log_m`` and the absorbing flags are per-null.
    """

    method: str
    u: float
    beta: np.ndarray
    n_total: int | None
    config: MethodConfig
    reflect: bool = False
    log_m: np.ndarray = field(init=False)
    certain: np.ndarray = field(init=False)
    frozen: np.ndarray = field(init=False)
    t: int = 0
    sum_x: float = 0.0
    welford_mean: float = 0.0
    welford_m2: float = 0.0
    eb_sum: float = 0.0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if self.reflect:
            self.beta = self.u - self.beta
        self.config = self.config.resolve(self.u, self.n_total)
        if self.reflect:
            self.config = self.config.reflected(self.u)
        g = len(self.beta)
        self.log_m = np.zeros(g)
        self.certain = np.zeros(g, dtype=bool)
        self.frozen = np.zeros(g, dtype=bool)

    @property
    def size(self) -> int:
        return len(self.beta)

    def null_means(self) -> np.ndarray:
        if self.n_total is None:
            return self.beta
        return (self.n_total * self.beta - self.sum_x) / (self.n_total - self.t)

    def _eb_sd_prev(self) -> float:
        if self.t < 2:
            return EB_SD_DEFAULT
        sd = math.sqrt(self.welford_m2 / (self.t - 1)) / self.u
        return max(EB_SD_MIN, sd)

    def _bet_scalar(self) -> float:
        """Shared part of the bet (null-independent)."""
        cfg = self.config
        if self.method == EB:
            i = self.t + 1
            raw = math.sqrt(
                2.0
                * math.log(2.0 / cfg.alpha_for_lambda)
                / (self._eb_sd_prev() * i * math.log1p(i))
            )
            return min(cfg.lambda_max, raw)
        raw = shrink_estimate(cfg.d, cfg.tau_0, self.sum_x, self.t)
        if self.method == ALPHA_UB:
            if self.t < 2:
                sig2 = cfg.variance_floor
            else:
                sig2 = max(cfg.variance_floor, self.welford_m2 / (self.t - 1))
            raw = (raw + cfg.f * self.u / sig2) / (1.0 + cfg.f / sig2)
        return raw

    def update(self, x: float) -> None:
        if self.reflect:
            x = self.u - x
        cfg = self.config
        u = self.u
        mu = self.null_means()
        live = ~self.frozen & ~self.certain
        deg_hi = mu + cfg.eps >= u
        deg_lo = mu <= 0
        # zero remaining mean mass is consistent with a zero draw only
        newly_certain = live & ~deg_hi & ((mu < 0) | (deg_lo & (x > 0)))
        if newly_certain.any():
            self.log_m[newly_certain] = np.inf
            self.certain |= newly_certain
        todo = live & ~deg_hi & ~deg_lo
        if todo.any():
            raw = self._bet_scalar()
            if self.method == EB:
                xs = x / u
                mu_hat_prev = (0.5 + self.eb_sum) / (self.t + 1)
                v = 4.0 * (xs - mu_hat_prev) ** 2
                self.log_m[todo] += raw * (xs - mu[todo] / u) - v * eb_psi(raw)
            else:
                mu_t = mu[todo]
                tau = np.minimum(
                    np.maximum(raw, mu_t + cfg.eps), u * (1.0 - cfg.delta)
                )
                y = (x * tau / mu_t + (u - x) * (u - tau) / (u - mu_t)) / u
                self.log_m[todo] += np.log(y)
        # shared accumulators advance for every physical draw
        self.t += 1
        self.sum_x += x
        d = x - self.welford_mean
        self.welford_mean += d / self.t
        self.welford_m2 += d * (x - self.welford_mean)
        self.eb_sum += x / u

    def freeze(self, which: np.ndarray) -> None:
        """Mask nulls: their future terms are 1 (absorbing)."""
        self.frozen |= which

    def rejected(self, level: float) -> np.ndarray:
        """Nulls whose current P-value is at or below ``level``."""
        return self.certain | (self.log_m >= -math.log(level))


@dataclass
class AffinePanel:
    """Affine representation of an EB supermartingale: log M = A - B*beta'.

    beta' is the null mean on the [0,1] scale.  No degenerate-null
    clamping is applied, so the value is exactly affine in the null; any
    deviation from the clamped path is conservative (it can only raise
    the implied P-value).  Used on the LP maximization path.
    """

    u: float
    n_total: int | None
    config: MethodConfig
    a: float = 0.0
    b: float = 0.0
    t: int = 0
    sum_xs: float = 0.0
    welford_mean: float = 0.0
    welford_m2: float = 0.0

    def __post_init__(self):
        self.config = self.config.resolve(self.u, self.n_total)

    def _lambda(self) -> float:
        cfg = self.config
        i = self.t + 1
        if self.t < 2:
            sd = EB_SD_DEFAULT
        else:
            sd = max(EB_SD_MIN, math.sqrt(self.welford_m2 / (self.t - 1)))
        raw = math.sqrt(
            2.0 * math.log(2.0 / cfg.alpha_for_lambda) / (sd * i * math.log1p(i))
        )
        return min(cfg.lambda_max, raw)

    def update(self, x: float) -> None:
        xs = x / self.u
        lam = self._lambda()
        mu_hat_prev = (0.5 + self.sum_xs) / (self.t + 1)
        v = 4.0 * (xs - mu_hat_prev) ** 2
        if self.n_total is None:
            self.a += lam * xs - v * eb_psi(lam)
            self.b += lam
        else:
            rem = self.n_total - self.t
            self.a += lam * xs - v * eb_psi(lam) + lam * self.sum_xs / rem
            self.b += lam * self.n_total / rem
        self.t += 1
        self.sum_xs += xs
        d = xs - self.welford_mean
        self.welford_mean += d / self.t
        self.welford_m2 += d * (xs - self.welford_mean)

    def log_m(self, beta_test: float) -> float:
        """log M at a test-scale null mean (affine evaluation)."""
        return self.a - self.b * (beta_test / self.u)

    def update_many(self, xs: np.ndarray) -> None:
        for x in xs:
            self.update(float(x))


def eb_affine_coefficients(
    stream: np.ndarray,
    u: float,
    n_total: int | None,
    config: MethodConfig | None = None,
) -> tuple[float, float]:
    """Vectorized (A, B) for a whole draw stream: log M(beta) = A - B*beta/u.

    Matches :class:`AffinePanel` update-by-update; used by the batch
    simulator where per-draw Python calls would dominate.
    """
    cfg = (config or MethodConfig()).resolve(u, n_total)
    xs = np.asarray(stream, dtype=float) / u
    n = len(xs)
    if n == 0:
        return 0.0, 0.0
    j = np.arange(1, n + 1)
    cs = np.cumsum(xs)
    mu_hat = (0.5 + cs) / (j + 1)
    mu_hat_prev = np.concatenate(([0.5], mu_hat[:-1]))
    # lagged running sample SD (ddof 1): draws 1 and 2 see the default
    if n > 2:
        jj = j[1:]  # 2..n
        var_j = np.maximum(
            0.0, (np.cumsum(xs * xs)[1:] - cs[1:] ** 2 / jj) / (jj - 1)
        )
        sd_lagged = np.maximum(EB_SD_MIN, np.sqrt(var_j[:-1]))
        sd_prev = np.concatenate(([EB_SD_DEFAULT, EB_SD_DEFAULT], sd_lagged))
    else:
        sd_prev = np.full(n, EB_SD_DEFAULT)
    raw = np.sqrt(
        2.0 * np.log(2.0 / cfg.alpha_for_lambda) / (sd_prev * j * np.log1p(j))
    )
    lam = np.minimum(cfg.lambda_max, raw)
    v = 4.0 * (xs - mu_hat_prev) ** 2
    psi = (-np.log1p(-lam) - lam) / 4.0
    sum_prev = np.concatenate(([0.0], cs[:-1]))
    if n_total is None:
        a = float(np.sum(lam * xs - v * psi))
        b = float(np.sum(lam))
    else:
        rem = n_total - (j - 1)
        a = float(np.sum(lam * xs - v * psi + lam * sum_prev / rem))
        b = float(np.sum(lam * n_total / rem))
    return a, b
