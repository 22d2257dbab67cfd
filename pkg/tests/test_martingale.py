import copy
import itertools
import math

import numpy as np
import pytest

from strataudit.martingale import (
    ALPHA_ST,
    ALPHA_UB,
    EB,
    AffinePanel,
    ExhaustionError,
    GridPanel,
    MartingaleState,
    MethodConfig,
    alpha_term,
    conditional_null_mean,
    eb_affine_coefficients,
    eb_log_term,
    eb_psi,
    lower_sided_rejects,
    lower_sided_update,
    make_state,
    shrink_estimate,
)

METHODS = (ALPHA_ST, ALPHA_UB, EB)


class TestConditionalNullMean:
    def test_first_draw_identity(self):
        assert conditional_null_mean(0.5, 1000, 0.0, 1) == 0.5

    def test_one_prior_draw(self):
        # (1000*0.5 - 1) / 999
        assert conditional_null_mean(0.5, 1000, 1.0, 2) == pytest.approx(499 / 999)

    def test_mass_consumed(self):
        assert conditional_null_mean(0.5, 2, 1.0, 2) == 0.0

    def test_exhaustion(self):
        with pytest.raises(ExhaustionError):
            conditional_null_mean(0.5, 10, 0.0, 11)


class TestAlphaTerm:
    def test_bet_at_null_is_identity(self):
        for x in (0.0, 0.3, 1.0):
            assert alpha_term(x, 0.4, 0.4, 1.0) == pytest.approx(1.0)

    def test_x_at_null_is_identity(self):
        for tau in (0.5, 0.9, 1.5):
            assert alpha_term(1.0, 1.0, tau, 2.0) == pytest.approx(1.0)

    def test_hand_value(self):
        assert alpha_term(2.0, 1.0, 1.9, 2.0) == pytest.approx(1.9)


class TestBets:
    def test_shrink_prior_only(self):
        assert shrink_estimate(20, 1.0, 0.0, 0) == 1.0

    def test_shrink_data_agrees(self):
        assert shrink_estimate(20, 1.0, 10.0, 10) == 1.0

    def test_shrink_pulls_down(self):
        assert shrink_estimate(20, 1.0, 0.0, 10) == pytest.approx(20 / 30)

    def test_ub_limits(self):
        # f = 0 leaves the shrink estimate untouched
        cfg = MethodConfig(f=0.0, tau_0=1.0, eps=0.0, variance_floor=0.01)
        s = MartingaleState(method=ALPHA_UB, u=2.0, beta=0.5, config=cfg, n_total=None)
        assert s.bet() == pytest.approx(1.0)

    def test_ub_hand_value(self):
        # shrink 1, f 0.01, u 2, sample variance 0.01 -> (1 + 2)/2 = 1.5
        cfg = MethodConfig(f=0.01, tau_0=1.0, eps=0.0, variance_floor=1e-9)
        s = MartingaleState(method=ALPHA_UB, u=2.0, beta=0.5, config=cfg, n_total=None)
        s.t, s.sum_x = 10, 10.0  # shrink estimate stays 1
        s.welford_m2 = 0.01 * 9  # sample variance (ddof 1) = 0.01
        assert s.bet() == pytest.approx(1.5)

    def test_ub_variance_floor_engages(self):
        cfg = MethodConfig(f=0.01, tau_0=1.0, eps=0.0, variance_floor=0.01)
        s = MartingaleState(method=ALPHA_UB, u=2.0, beta=0.5, config=cfg, n_total=None)
        # no draws yet: floored variance, bet biased toward u
        assert s.bet() == pytest.approx((1.0 + 0.01 * 2 / 0.01) / (1 + 0.01 / 0.01))

    def test_truncation_above_null(self):
        cfg = MethodConfig(tau_0=0.1, eps=0.01)
        s = MartingaleState(method=ALPHA_ST, u=1.0, beta=0.6, config=cfg, n_total=None)
        assert s.bet() == pytest.approx(0.61)  # lifted to null mean + eps

    def test_truncation_below_cap(self):
        cfg = MethodConfig(tau_0=5.0, eps=0.0)
        s = MartingaleState(method=ALPHA_ST, u=1.0, beta=0.5, config=cfg, n_total=None)
        assert s.bet() <= 1.0


class TestEbLambda:
    def test_clamp_engages_at_start(self):
        s = make_state(EB, u=1.0, beta=0.5, n_total=None)
        # raw value sqrt(2 ln 40 / (0.25 ln 2)) ~ 6.5 clamps to 0.75
        assert s.bet() == 0.75

    def test_zero_cap(self):
        s = make_state(EB, 1.0, 0.5, None, MethodConfig(lambda_max=0.0))
        assert s.bet() == 0.0

    def test_high_dispersion_unclamps(self):
        s = make_state(EB, 1.0, 0.5, None)
        # alternate extreme draws: running SD near 1/2, bet decays below cap
        for x in [0.0, 1.0] * 15:
            s.update(x)
        assert s.bet() < 0.75

    def test_cap_per_config(self):
        s = make_state(EB, 1.0, 0.5, None, MethodConfig(lambda_max=0.9))
        assert s.bet() == 0.9


class TestEbLogTerm:
    def test_zero_bet(self):
        assert eb_log_term(0.3, 0.5, 0.0, 0.5) == 0.0

    def test_at_null_no_variance(self):
        assert eb_log_term(0.5, 0.5, 0.4, 0.5) == 0.0

    def test_hand_value(self):
        # psi(1/2) = (ln 2 - 1/2)/4; v = 4 (x - mu_hat)^2 = 1
        got = eb_log_term(1.0, 0.5, 0.5, 0.5)
        assert got == pytest.approx(0.25 - 1.0 * (math.log(2) - 0.5) / 4, abs=1e-9)
        assert eb_psi(0.5) == pytest.approx(0.0482868, abs=1e-7)

    def test_bet_domain(self):
        with pytest.raises(Exception):
            eb_log_term(0.5, 0.5, 1.0, 0.5)


def urn_orderings(urn):
    return sorted(set(itertools.permutations(urn)))


class TestSupermartingaleProperty:
    """Exhaustive conditional-expectation checks on small urns."""

    URN = (0.0, 0.0, 0.0, 1.0, 1.0, 1.0)  # mean exactly 1/2

    @pytest.mark.parametrize("method", [ALPHA_ST, ALPHA_UB])
    def test_alpha_multiplier_expectation_exactly_one(self, method):
        # for every prefix of every ordering, the expected multiplier over
        # the remaining urn equals 1 when the null mean is the true mean
        n = len(self.URN)
        for ordering in urn_orderings(self.URN):
            state = make_state(method, u=1.0, beta=0.5, n_total=n)
            remaining = list(self.URN)
            for x in ordering:
                e = sum(state.multiplier(v) for v in remaining) / len(remaining)
                assert abs(e - 1.0) < 1e-10
                state.update(x)
                remaining.remove(x)

    def test_eb_multiplier_expectation_at_most_one(self):
        n = len(self.URN)
        for ordering in urn_orderings(self.URN):
            state = make_state(EB, u=1.0, beta=0.5, n_total=n)
            remaining = list(self.URN)
            for x in ordering:
                e = sum(state.multiplier(v) for v in remaining) / len(remaining)
                assert e <= 1.0 + 1e-10
                state.update(x)
                remaining.remove(x)

    @pytest.mark.parametrize("method", [ALPHA_ST, ALPHA_UB])
    def test_average_martingale_is_one_at_every_time(self, method):
        # brute-force enumeration: averaging M_t across all orderings
        orderings = urn_orderings(self.URN)
        n = len(self.URN)
        m = np.ones((len(orderings), n))
        for i, ordering in enumerate(orderings):
            state = make_state(method, u=1.0, beta=0.5, n_total=n)
            prod = 1.0
            for t, x in enumerate(ordering):
                prod *= state.multiplier(x)
                state.update(x)
                m[i, t] = prod
        assert np.all(np.abs(m.mean(axis=0) - 1.0) < 1e-10)


class TestVille:
    """Crossing 1/alpha under a true null stays near the nominal rate."""

    @pytest.mark.parametrize("method", METHODS)
    def test_crossing_rate(self, method):
        rng = np.random.default_rng(2024)
        n, reps, u = 40, 10_000, 1.0
        urn = np.array([0.0] * 20 + [1.0] * 20)
        crossed = 0
        for _ in range(reps):
            stream = rng.permutation(urn)
            state = make_state(method, u=u, beta=0.5, n_total=n)
            sup = 0.0
            for x in stream:
                state.update(float(x))
                if state.certain_reject:
                    sup = math.inf
                    break
                sup = max(sup, state.log_m)
            if sup >= math.log(20.0):
                crossed += 1
        bound = 0.05 + 3 * math.sqrt(0.05 * 0.95 / reps)
        assert crossed / reps <= bound


class TestPredictability:
    @pytest.mark.parametrize("method", METHODS)
    def test_bet_fixed_before_observation(self, method):
        rng = np.random.default_rng(7)
        state = make_state(method, u=1.0, beta=0.45, n_total=100)
        for _ in range(30):
            x = float(rng.choice([0.0, 0.5, 1.0]))
            snapshot = copy.deepcopy(state)
            bet_before = snapshot.bet()
            state.update(x)
            # the bet recomputed from the pre-draw snapshot is bit-identical
            assert snapshot.bet() == bet_before
            # and the consumed multiplier used exactly that bet
            mu = snapshot.current_null_mean()
            if 0 < mu and mu + snapshot.config.eps < snapshot.u:
                if method == EB:
                    expect = eb_log_term(
                        x, mu, bet_before, snapshot.eb_mu_hat_prev()
                    )
                else:
                    expect = math.log(alpha_term(x, mu, bet_before, 1.0))
                assert state.log_m - snapshot.log_m == pytest.approx(expect, abs=1e-12)


class TestDegenerateRules:
    def test_high_null_terms_are_one(self):
        # null mean pinned at the bound: remaining capacity satisfies it
        state = make_state(ALPHA_ST, u=1.0, beta=1.0, n_total=10)
        for x in [1.0, 0.0, 1.0]:
            state.update(x)
        assert state.log_m == 0.0
        assert not state.certain_reject

    def test_impossible_null_certain_reject(self):
        state = make_state(ALPHA_ST, u=1.0, beta=0.1, n_total=4)
        for x in [1.0, 1.0]:
            state.update(x)
        # prior draws already exceed the null's total: 4*0.1 < 2
        assert state.certain_reject
        assert state.p_value() == 0.0
        before = state.log_m
        state.update(1.0)  # no-op
        assert state.log_m == before

    def test_frozen_is_absorbing(self):
        state = make_state(ALPHA_ST, u=1.0, beta=0.5, n_total=10)
        state.update(1.0)
        state.frozen = True
        lm = state.log_m
        for x in [1.0, 0.0]:
            state.update(x)
        assert state.log_m == lm
        assert state.t == 3  # draws still tracked


class TestLowerSided:
    def test_reflection_symmetry(self):
        # a lower-sided test on the reflected stream, with mirrored bet
        # anchor, reproduces the upper-sided trajectory exactly
        upper = make_state(
            ALPHA_ST, u=2.0, beta=0.8, n_total=50, config=MethodConfig(tau_0=1.3)
        )
        lower = make_state(
            ALPHA_ST, u=2.0, beta=2.0 - 0.8, n_total=50, side="lower",
            config=MethodConfig(tau_0=2.0 - 1.3),
        )
        rng = np.random.default_rng(3)
        for _ in range(30):
            x = float(rng.uniform(0, 2))
            upper.update(x)
            lower_sided_update(lower, 2.0 - x)  # reflected stream
        assert lower.log_m == pytest.approx(upper.log_m, rel=1e-12)

    def test_maximal_data_never_rejects(self):
        # all draws at the bound with a null near the bound: the lower
        # test sees no evidence the mean is small
        state = make_state(ALPHA_ST, u=1.0, beta=0.98, n_total=1000, side="lower")
        for _ in range(200):
            lower_sided_update(state, 1.0)
        assert not lower_sided_rejects(state)

    def test_low_mean_rejects_eventually(self):
        # mean truly below the lower null "mean >= 0.95": rejection
        # probability approaches 1 as draws accumulate
        rng = np.random.default_rng(12)
        rejected = 0
        for rep in range(20):
            state = make_state(EB, u=1.0, beta=0.95, n_total=1000, side="lower")
            urn = np.array([1.0] * 900 + [0.0] * 100)
            stream = rng.permutation(urn)
            for x in stream[:800]:
                lower_sided_update(state, float(x))
                if lower_sided_rejects(state):
                    rejected += 1
                    break
        assert rejected >= 16


class TestPanelEquivalence:
    """The vectorized panels must match the scalar states bit-for-bit."""

    @pytest.mark.parametrize("method", METHODS)
    @pytest.mark.parametrize("reflect", [False, True])
    def test_grid_panel_matches_scalar(self, method, reflect):
        rng = np.random.default_rng(5)
        betas = np.array([0.05, 0.2, 0.45, 0.5, 0.62, 0.9, 0.99])
        n = 60
        panel = GridPanel(
            method=method, u=1.0, beta=betas.copy(), n_total=n,
            config=MethodConfig(), reflect=reflect,
        )
        side = "lower" if reflect else "upper"
        states = [
            make_state(method, u=1.0, beta=float(b), n_total=n, side=side)
            for b in betas
        ]
        for _ in range(40):
            x = float(rng.choice([0.0, 0.5, 1.0], p=[0.2, 0.3, 0.5]))
            panel.update(x)
            for s in states:
                if side == "lower":
                    lower_sided_update(s, x)
                else:
                    s.update(x)
        for i, s in enumerate(states):
            if s.certain_reject:
                assert panel.certain[i]
            else:
                assert panel.log_m[i] == pytest.approx(s.log_m, rel=1e-12, abs=1e-12)

    def test_affine_panel_matches_vectorized(self):
        rng = np.random.default_rng(8)
        stream = rng.choice([0.0, 0.5, 1.0], size=120)
        panel = AffinePanel(u=1.0, n_total=500, config=MethodConfig())
        panel.update_many(stream)
        a, b = eb_affine_coefficients(stream, u=1.0, n_total=500)
        assert a == pytest.approx(panel.a, rel=1e-12)
        assert b == pytest.approx(panel.b, rel=1e-12)

    def test_affine_matches_grid_eb(self):
        rng = np.random.default_rng(9)
        stream = rng.choice([0.0, 0.5, 1.0], size=50)
        betas = np.array([0.3, 0.5, 0.7])
        grid = GridPanel(method=EB, u=1.0, beta=betas.copy(), n_total=400,
                         config=MethodConfig())
        affine = AffinePanel(u=1.0, n_total=400, config=MethodConfig())
        for x in stream:
            grid.update(float(x))
            affine.update(float(x))
        for i, b in enumerate(betas):
            assert affine.log_m(float(b)) == pytest.approx(grid.log_m[i], rel=1e-10)


class TestEbAffinity:
    def test_three_point_collinearity(self):
        rng = np.random.default_rng(10)
        stream = rng.choice([0.0, 0.5, 1.0], size=80)
        lms = []
        for beta in (0.2, 0.5, 0.8):
            s = make_state(EB, u=1.0, beta=beta, n_total=300,
                           config=MethodConfig(eps=0.0))
            for x in stream:
                s.update(float(x))
            lms.append(s.log_m)
        # exact affinity: midpoint value is the average of the endpoints
        assert lms[1] == pytest.approx((lms[0] + lms[2]) / 2, abs=1e-9)
        # slope is nonpositive in the null mean
        assert lms[0] >= lms[2]


class TestNamedBetOps:
    def test_wrappers_delegate(self):
        from strataudit.martingale import alpha_st_bet, alpha_ub_bet, eb_lambda, update

        st = make_state(ALPHA_ST, 1.0, 0.5, 100)
        assert alpha_st_bet(st) == st.bet()
        ub = make_state(ALPHA_UB, 2.0, 0.9, 100)
        assert alpha_ub_bet(ub) == ub.bet()
        eb = make_state(EB, 1.0, 0.5, 100)
        assert eb_lambda(eb) == eb.bet()
        update(st, 1.0)
        assert st.t == 1

    def test_wrappers_check_method(self):
        from strataudit.martingale import DomainError, alpha_ub_bet

        st = make_state(ALPHA_ST, 1.0, 0.5, 100)
        with pytest.raises(DomainError):
            alpha_ub_bet(st)
