import math

import numpy as np
import pytest
from scipy.integrate import quad

from semistatic.errors import ConvergenceFailure, InvalidInput, NoImpliedVol
from semistatic.pricing import BsInputs, bs_greeks, bs_price, implied_vol, price_vec

# value of the S=K=100, r=5%, sigma=20%, tau=0.25 call frozen from the
# quadrature oracle below before the analytic path was written
GOLDEN_QUARTER_ATM_CALL = 4.614997129602868


def lognormal_quadrature_price(spot, strike, rate, carry, vol, tenor, icp):
    """Independent oracle: discounted expectation of the terminal payoff
    against the lognormal density, by adaptive quadrature."""

    def integrand(z):
        st = spot * math.exp((rate - carry - 0.5 * vol * vol) * tenor + vol * math.sqrt(tenor) * z)
        payoff = max(icp * (st - strike), 0.0)
        return payoff * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    value, _ = quad(integrand, -12.0, 12.0, limit=400, epsabs=1e-13, epsrel=1e-13)
    return math.exp(-rate * tenor) * value


def call(spot=100.0, strike=100.0, rate=0.0, carry=0.0, vol=0.2, tenor=0.25):
    return BsInputs(spot, strike, rate, carry, vol, tenor, "C")


def put(spot=100.0, strike=100.0, rate=0.0, carry=0.0, vol=0.2, tenor=0.25):
    return BsInputs(spot, strike, rate, carry, vol, tenor, "P")


class TestPrice:
    def test_quadrature_golden(self):
        inputs = call(rate=0.05)
        oracle = lognormal_quadrature_price(100, 100, 0.05, 0.0, 0.2, 0.25, 1)
        assert oracle == pytest.approx(GOLDEN_QUARTER_ATM_CALL, abs=1e-10)
        assert bs_price(inputs) == pytest.approx(oracle, abs=1e-8)

    def test_zero_vol_intrinsic(self):
        assert bs_price(call(strike=90.0, vol=0.0, tenor=1.0)) == pytest.approx(10.0)

    def test_zero_tenor_intrinsic(self):
        assert bs_price(call(strike=90.0, tenor=0.0)) == pytest.approx(10.0)
        assert bs_price(put(strike=90.0, tenor=0.0)) == 0.0

    def test_zero_strike_is_forward(self):
        inputs = call(strike=0.0, carry=0.03, tenor=0.5)
        assert bs_price(inputs) == pytest.approx(100.0 * math.exp(-0.03 * 0.5), rel=1e-12)

    def test_discounted_intrinsic_limit_with_carry(self):
        inputs = call(strike=90.0, rate=0.04, carry=0.01, vol=0.0, tenor=1.0)
        expected = 100 * math.exp(-0.01) - 90 * math.exp(-0.04)
        assert bs_price(inputs) == pytest.approx(expected, rel=1e-12)

    def test_invalid_inputs_raise(self):
        with pytest.raises(InvalidInput):
            BsInputs(float("nan"), 100, 0.0, 0.0, 0.2, 0.25, "C")
        with pytest.raises(InvalidInput):
            BsInputs(-1.0, 100, 0.0, 0.0, 0.2, 0.25, "C")
        with pytest.raises(InvalidInput):
            BsInputs(100.0, 100, 0.0, 0.0, -0.2, 0.25, "C")
        with pytest.raises(InvalidInput):
            BsInputs(100.0, 100, 0.0, 0.0, 0.2, 0.25, "X")

    def test_put_call_parity_random(self):
        rng = np.random.default_rng(20240311)
        for _ in range(1000):
            s = rng.uniform(50, 20000)
            k = s * rng.uniform(0.5, 1.5)
            r = rng.uniform(-0.02, 0.10)
            q = rng.uniform(-0.02, 0.08)
            vol = rng.uniform(0.05, 1.2)
            tau = rng.uniform(0.01, 2.0)
            c = bs_price(BsInputs(s, k, r, q, vol, tau, "C"))
            p = bs_price(BsInputs(s, k, r, q, vol, tau, "P"))
            forward = s * math.exp(-q * tau) - k * math.exp(-r * tau)
            assert c - p == pytest.approx(forward, rel=1e-10, abs=1e-10 * s)

    def test_monotone_in_vol(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            s = rng.uniform(50, 500)
            k = s * rng.uniform(0.7, 1.3)
            tau = rng.uniform(0.05, 1.5)
            vols = np.linspace(0.05, 1.5, 30)
            prices = price_vec(s, k, 0.02, 0.0, vols, tau, 1)
            assert np.all(np.diff(prices) > 0)


class TestGreeks:
    def test_deep_itm_saturation(self):
        g = bs_greeks(call(spot=200.0, strike=100.0, vol=0.1, tenor=0.1))
        assert g.delta == pytest.approx(1.0, abs=1e-10)
        assert g.gamma == pytest.approx(0.0, abs=1e-10)

    def test_delta_parity(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            s = rng.uniform(50, 500)
            args = dict(
                spot=s, strike=s * rng.uniform(0.7, 1.4), rate=rng.uniform(0, 0.1),
                carry=rng.uniform(0, 0.05), vol=rng.uniform(0.1, 0.9), tenor=rng.uniform(0.02, 1.5),
            )
            dc = bs_greeks(call(**args)).delta
            dp = bs_greeks(put(**args)).delta
            assert dc - dp == pytest.approx(math.exp(-args["carry"] * args["tenor"]), rel=1e-12)

    def test_degenerate_greeks(self):
        g = bs_greeks(call(strike=90.0, vol=0.0, tenor=1.0))
        assert g.delta == 1.0 and g.gamma == 0.0 and g.vega == 0.0 and g.theta == 0.0
        g = bs_greeks(put(strike=90.0, tenor=0.0))
        assert g.delta == 0.0

    def test_call_delta_within_carry_bound(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            s = rng.uniform(50, 500)
            inputs = BsInputs(s, s * rng.uniform(0.5, 2.0), rng.uniform(0, 0.1),
                              rng.uniform(0, 0.08), rng.uniform(0.05, 1.0),
                              rng.uniform(0.01, 2.0), "C")
            g = bs_greeks(inputs)
            assert -1e-15 <= g.delta <= math.exp(-inputs.carry_yield * inputs.tenor) + 1e-15
            assert g.gamma >= 0.0

    def test_finite_difference_agreement(self):
        """Central differences of the price match analytic greeks to 1e-5
        relative over 1000 seeded draws (spot bumps 1e-4*S, vol bumps 1e-5,
        time bump 1/3650)."""
        rng = np.random.default_rng(99)
        for _ in range(1000):
            s = rng.uniform(80, 15000)
            k = s * rng.uniform(0.8, 1.25)
            r = rng.uniform(0.0, 0.08)
            q = rng.uniform(0.0, 0.04)
            vol = rng.uniform(0.1, 0.8)
            tau = rng.uniform(0.05, 1.5)
            kind = "C" if rng.random() < 0.5 else "P"
            icp = 1 if kind == "C" else -1
            g = bs_greeks(BsInputs(s, k, r, q, vol, tau, kind))

            hs = 1e-4 * s
            up = float(price_vec(s + hs, k, r, q, vol, tau, icp))
            dn = float(price_vec(s - hs, k, r, q, vol, tau, icp))
            mid = float(price_vec(s, k, r, q, vol, tau, icp))
            fd_delta = (up - dn) / (2 * hs)
            fd_gamma = (up - 2 * mid + dn) / hs**2
            assert fd_delta == pytest.approx(g.delta, rel=1e-5, abs=1e-7)
            assert fd_gamma == pytest.approx(g.gamma, rel=1e-5, abs=1e-6 * abs(g.vega) / s**2 + 1e-12)

            hv = 1e-5
            vup = float(price_vec(s, k, r, q, vol + hv, tau, icp))
            vdn = float(price_vec(s, k, r, q, vol - hv, tau, icp))
            fd_vega = (vup - vdn) / (2 * hv)
            fd_volga = (vup - 2 * mid + vdn) / hv**2
            assert fd_vega == pytest.approx(g.vega, rel=1e-5, abs=1e-7 * s)
            # the second difference at h=1e-5 carries irreducible cancellation
            # noise of order eps * price / h^2; allow it on top of 1e-5 relative
            volga_noise = 300 * np.finfo(float).eps * max(mid, 1.0) / hv**2
            assert fd_volga == pytest.approx(g.volga, rel=1e-5, abs=volga_noise)

            ht = 1.0 / 3650.0
            tup = float(price_vec(s, k, r, q, vol, tau + ht, icp))
            tdn = float(price_vec(s, k, r, q, vol, tau - ht, icp))
            fd_theta = (tdn - tup) / (2 * ht)
            assert fd_theta == pytest.approx(g.theta, rel=1e-5, abs=1e-6 * s)


class TestImpliedVol:
    def test_round_trip(self):
        price = bs_price(call(rate=0.03, carry=0.01))
        vol = implied_vol(price, 100.0, 100.0, 0.03, 0.01, 0.25, "C")
        assert vol == pytest.approx(0.2, abs=1e-8)

    def test_below_intrinsic_rejected(self):
        with pytest.raises(NoImpliedVol):
            implied_vol(9.0, 100.0, 90.0, 0.0, 0.0, 0.5, "C")

    def test_above_asset_bound_rejected(self):
        with pytest.raises(NoImpliedVol):
            implied_vol(101.0, 100.0, 90.0, 0.0, 0.0, 0.5, "C")

    def test_otm_put_matches_bisection_oracle(self):
        target = bs_price(put(spot=100.0, strike=80.0, rate=0.02, vol=0.85, tenor=0.4))

        def bisect(lo=1e-4, hi=5.0, steps=120):
            for _ in range(steps):
                mid = 0.5 * (lo + hi)
                price = bs_price(BsInputs(100.0, 80.0, 0.02, 0.0, mid, 0.4, "P"))
                if price < target:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)

        oracle = bisect()
        result = implied_vol(target, 100.0, 80.0, 0.02, 0.0, 0.4, "P")
        assert result == pytest.approx(oracle, abs=1e-7)
        assert result == pytest.approx(0.85, abs=1e-7)

    def test_bracket_expansion(self):
        target = bs_price(call(vol=6.0, tenor=0.5))
        assert implied_vol(target, 100.0, 100.0, 0.0, 0.0, 0.5, "C") == pytest.approx(6.0, abs=1e-6)

    def test_unbracketable_raises(self):
        upper = 100.0  # asset bound for a zero-carry call
        with pytest.raises(ConvergenceFailure):
            implied_vol(upper * 0.99999, 100.0, 100.0, 0.0, 0.0, 0.25, "C")

    def test_price_tolerance_post_condition(self):
        price = bs_price(call(vol=0.37, tenor=0.1))
        vol = implied_vol(price, 100.0, 100.0, 0.0, 0.0, 0.1, "C")
        assert abs(bs_price(call(vol=vol, tenor=0.1)) - price) <= 1e-8 * 100.0
