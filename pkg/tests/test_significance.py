import math

import numpy as np
import pytest
from scipy import optimize

from oracles import li_ma_significance

from onoffstats.errors import DomainError
from onoffstats.likelihoods import OnOffObservation, log_onoff
from onoffstats.significance import lima_significance, onoff_sys_significance


class TestLiMa:
    def test_balanced_counts_give_zero(self):
        res = lima_significance(OnOffObservation(90, 270, 3.0))
        assert res.lam == pytest.approx(1.0, abs=1e-12)
        assert res.s_value == 0.0

    def test_moderate_excess(self):
        res = lima_significance(OnOffObservation(120, 270, 3.0))
        assert res.s_value == pytest.approx(2.57, abs=0.01)
        assert res.s_value == pytest.approx(li_ma_significance(120, 270, 3.0), abs=1e-12)

    def test_matches_numeric_mle_oracle(self):
        obs = OnOffObservation(360, 270, 3.0)

        def neg_free(x):
            s, b = x
            if b < 0 or s + b < 0:
                return 1e30
            return -log_onoff(obs, s, b)

        def neg_null(b):
            if b[0] < 0:
                return 1e30
            return -log_onoff(obs, 0.0, b[0])

        free = optimize.minimize(neg_free, [90.0, 90.0], method="Nelder-Mead",
                                 options={"xatol": 1e-10, "fatol": 1e-12})
        null = optimize.minimize(neg_null, [150.0], method="Nelder-Mead",
                                 options={"xatol": 1e-10, "fatol": 1e-12})
        t = 2.0 * (null.fun - free.fun)
        res = lima_significance(obs)
        assert res.s_value == pytest.approx(math.sqrt(t), abs=1e-6)

    def test_deficit_is_negative(self):
        res = lima_significance(OnOffObservation(60, 270, 3.0))
        assert res.s_value < 0.0
        assert res.s_value == pytest.approx(-li_ma_significance(60, 270, 3.0), abs=1e-12)

    def test_clamped_deficit_pins_ratio(self):
        res = lima_significance(OnOffObservation(60, 270, 3.0), clamped=True)
        assert res.lam == 1.0
        assert res.s_value == 0.0

    def test_degenerate_all_zero(self):
        res = lima_significance(OnOffObservation(0, 0, 3.0))
        assert res.s_value == 0.0


class TestOnOffSys:
    def test_degenerate_sigma_matches_lima(self):
        rng = np.random.default_rng(41)
        for _ in range(100):
            n_on = int(rng.integers(0, 500))
            n_off = int(rng.integers(0, 500))
            tau = float(rng.uniform(1.0, 5.0))
            plain = lima_significance(OnOffObservation(n_on, n_off, tau))
            sys = onoff_sys_significance(OnOffObservation(n_on, n_off, tau, 1e-4))
            assert sys.s_value == pytest.approx(plain.s_value, abs=1e-3)

    def test_balanced_counts(self):
        res = onoff_sys_significance(OnOffObservation(90, 270, 3.0, 0.03))
        assert abs(res.s_value) < 1e-6
        assert res.null_fit.nuisance.alpha_on == pytest.approx(1.0, abs=1e-6)
        assert res.null_fit.nuisance.alpha_off == pytest.approx(1.0, abs=1e-6)
        assert res.free_fit.nuisance.alpha_on == 1.0
        assert res.free_fit.nuisance.alpha_off == 1.0

    def test_free_fit_closed_form(self):
        res = onoff_sys_significance(OnOffObservation(360, 270, 3.0, 0.03))
        assert res.free_fit.nuisance.b_prime == pytest.approx(90.0)
        assert res.s_value > 0.0

    def test_requires_sigma(self):
        with pytest.raises(DomainError):
            onoff_sys_significance(OnOffObservation(10, 10, 1.0, 0.0))

    def test_ratio_bounded_and_consistent(self):
        rng = np.random.default_rng(43)
        for _ in range(50):
            obs = OnOffObservation(
                int(rng.integers(0, 400)), int(rng.integers(0, 400)),
                float(rng.uniform(1.0, 5.0)), float(rng.uniform(0.01, 0.1)),
            )
            for method in (lima_significance, onoff_sys_significance):
                if method is lima_significance:
                    res = method(OnOffObservation(obs.n_obs, obs.n_bg, obs.tau))
                else:
                    res = method(obs)
                assert 0.0 < res.lam <= 1.0 + 1e-12
                assert res.s_value**2 == pytest.approx(-2.0 * math.log(res.lam), abs=1e-9)

    def test_systematics_weaken_evidence_on_average(self):
        # distribution-level: across a grid of observations the systematics
        # variant must not exceed the plain one by more than 0.05 on average
        diffs = []
        for n_on in range(80, 131, 5):
            for n_off in (240, 270, 300):
                plain = lima_significance(OnOffObservation(n_on, n_off, 3.0)).s_value
                sys = onoff_sys_significance(OnOffObservation(n_on, n_off, 3.0, 0.03)).s_value
                diffs.append(sys - plain)
        assert np.mean(diffs) <= 0.05
