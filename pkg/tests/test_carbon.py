import math

import numpy as np
import pytest

from carbonrl import carbon as cb
from carbonrl import channel as ch
from carbonrl import numerics as num


@pytest.fixture
def infer():
    return cb.InferenceProfile()


@pytest.fixture
def comm():
    return cb.CommProfile()


class TestInferenceTime:
    def test_zero(self, infer):
        assert cb.inference_time(infer, 0.0) == 0.0

    def test_single_word(self, infer):
        # 1.75 TFLOP-word / (8 * 156 TFLOP/s)
        assert cb.inference_time(infer, 1.0) == pytest.approx(1.75 / (8 * 156), rel=1e-12)

    def test_hundred_words(self, infer):
        expected = 1.75 / (8 * 156) * 100.0**0.8
        assert cb.inference_time(infer, 100.0) == pytest.approx(expected, rel=1e-12)
        assert 0.0555 <= cb.inference_time(infer, 100.0) <= 0.0562

    def test_concave_increasing(self, infer):
        ks = np.linspace(1.0, 1000.0, 64)
        ts = np.array([cb.inference_time(infer, float(k)) for k in ks])
        assert (np.diff(ts) > 0).all()
        assert (np.diff(np.diff(ts)) < 0).all()

    def test_domain(self, infer):
        with pytest.raises(ValueError):
            cb.inference_time(infer, -1.0)


class TestInferenceCarbon:
    def test_zero(self, infer):
        assert cb.inference_carbon(infer, 100.0 / 3.6e6, 0.0) == 0.0

    def test_hand_arithmetic(self, infer):
        # kappa=100, zeta1=100 gCO2/kWh: operational
        # 100^0.8 * 0.011218 s * 428 W * 1.58 * (100/3.6e6) g/J,
        # embodied 100^0.8 * 0.011218 s * 318000 g / 9.4608e7 s
        z1 = 100.0 / 3.6e6
        val = cb.inference_carbon(infer, z1, 100.0)
        w = 100.0**0.8 * (0.35e12 * 5 / 156e12)
        oper = w * 428.0 * 1.58 * z1
        emb = w * 318e3 / (3 * 365 * 86400.0)
        assert oper == pytest.approx(8.39e-3, rel=2e-3)
        assert emb == pytest.approx(1.50e-3, rel=2e-3)
        assert val == pytest.approx(oper + emb, rel=1e-12)
        assert 9.5e-3 <= val <= 10.3e-3

    def test_linear_in_zeta1_operational_only(self, infer):
        z1 = 100.0 / 3.6e6
        base = cb.inference_carbon(infer, z1, 50.0)
        doubled = cb.inference_carbon(infer, 2 * z1, 50.0)
        emb = 50.0**0.8 * infer.gpu_seconds_per_word * infer.c_gpu_emb / infer.t_dc
        assert doubled - base == pytest.approx(base - emb, rel=1e-9)

    def test_monotone(self, infer):
        z1 = 100.0 / 3.6e6
        vals = [cb.inference_carbon(infer, z1, k) for k in (1.0, 10.0, 100.0, 1000.0)]
        assert all(a < b for a, b in zip(vals, vals[1:]))


class TestTransTime:
    def test_unit_snr(self, comm):
        chp = ch.ChannelParams(m=2.0, omega=1.0, bandwidth=2e7)
        assert cb.trans_time(comm, chp, 100.0, 1.0) == pytest.approx(2.5e-4, rel=1e-12)

    def test_snr_three_halves_time(self, comm):
        chp = ch.ChannelParams(m=2.0, omega=1.0, bandwidth=2e7)
        assert cb.trans_time(comm, chp, 100.0, 3.0) == pytest.approx(1.25e-4, rel=1e-12)

    def test_zero_words(self, comm):
        chp = ch.ChannelParams(m=2.0, omega=1.0, bandwidth=2e7)
        assert cb.trans_time(comm, chp, 0.0, 5.0) == 0.0

    def test_domain(self, comm):
        chp = ch.ChannelParams(m=2.0, omega=1.0)
        with pytest.raises(ValueError):
            cb.trans_time(comm, chp, 10.0, 0.0)


class TestCommCarbonInstant:
    def test_zero_words(self, comm):
        chp = ch.ChannelParams(m=2.0, omega=1.0, bandwidth=2e7)
        assert cb.comm_carbon_instant(comm, chp, 650.0 / 3.6e6, 0.0, 30.0, 10.0) == 0.0

    def test_hand_arithmetic(self, comm):
        # kappa=100, beta=50, B=2e7, gamma=10, P=30, zeta2=650 gCO2/kWh.
        # Transmit: 650/3.6e6 * 30 * 5000/(2e7*log2(11)); fixed+embodied:
        # 5e-6 * (0.10833 + 0.020612) g/s-equivalent. (See ledger: the
        # transmit value is 3.914e-7 g with the kWh conversion.)
        chp = ch.ChannelParams(m=2.0, omega=1.0, bandwidth=2e7)
        z2 = 650.0 / 3.6e6
        val = cb.comm_carbon_instant(comm, chp, z2, 100.0, 30.0, 10.0)
        t = 5000.0 / (2e7 * math.log2(11.0))
        transmit = z2 * 30.0 * t
        fixed = 5e-6 * (z2 * 600.0 + 6500e3 / (10 * 365 * 86400.0))
        assert transmit == pytest.approx(3.914e-7, rel=1e-3)
        assert fixed == pytest.approx(6.45e-7, rel=1e-3)
        assert val == pytest.approx(transmit + fixed, rel=1e-12)

    def test_second_term_independent_of_gamma_and_power(self, comm):
        chp = ch.ChannelParams(m=2.0, omega=1.0, bandwidth=2e7)
        z2 = 650.0 / 3.6e6
        fixed_part = 100.0 * comm.beta * cb.comm_carbon_fixed_rate(comm, z2)
        for p, g in ((1.0, 0.5), (30.0, 10.0), (60.0, 200.0)):
            val = cb.comm_carbon_instant(comm, chp, z2, 100.0, p, g)
            transmit = z2 * p * cb.trans_time(comm, chp, 100.0, g)
            assert val - transmit == pytest.approx(fixed_part, rel=1e-12)


class TestAvgTransTime:
    def test_zero_words(self, comm):
        chp = ch.ChannelParams(m=3.0, omega=2.0, bandwidth=2e7)
        b = ch.make_link_budget(chp, 30.0, 0.1)
        assert cb.avg_trans_time(comm, chp, b, 0.0) == 0.0

    def test_linear_in_kappa(self, comm):
        chp = ch.ChannelParams(m=3.0, omega=2.0, bandwidth=2e7)
        b = ch.make_link_budget(chp, 30.0, 0.1)
        one = cb.avg_trans_time(comm, chp, b, 100.0)
        two = cb.avg_trans_time(comm, chp, b, 200.0)
        assert two == pytest.approx(2.0 * one, rel=1e-12)

    def test_against_conditional_monte_carlo(self, comm):
        chp = ch.ChannelParams(m=3.0, omega=2.0, bandwidth=2e7)
        b = ch.make_link_budget(chp, 30.0, 0.1)
        val = cb.avg_trans_time(comm, chp, b, 100.0)
        rng = num.make_rng(21)
        draws = ch.sample_snr_conditional_batch(chp, b, 1_000_000, rng)
        mc = float(np.mean([cb.trans_time(comm, chp, 100.0, g) for g in draws[:200_000]]))
        assert val == pytest.approx(mc, rel=0.01)

    def test_decreasing_in_power_with_resolved_threshold(self, comm):
        chp = ch.ChannelParams(m=4.0, omega=2.0, bandwidth=2e7)
        vals = []
        for p in (1.0, 5.0, 20.0, 60.0):
            b = ch.make_link_budget(chp, p, 0.1)
            vals.append(cb.avg_trans_time(comm, chp, b, 100.0))
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_eps_to_zero_matches_unconditional(self, comm):
        chp = ch.ChannelParams(m=3.0, omega=2.0, bandwidth=2e7)
        b = ch.make_link_budget(chp, 30.0, 1e-6)
        val = cb.avg_trans_time(comm, chp, b, 100.0)
        theta = ch.snr_scale(chp, 30.0)
        unconditional = 100.0 * comm.beta / chp.bandwidth * num.gamma_tail_expectation(
            num.KIND_INV_LOG2, chp.m, theta, 0.0
        )
        assert val == pytest.approx(unconditional, rel=1e-3)


class TestAvgCommCarbon:
    def test_zero_words(self, comm):
        chp = ch.ChannelParams(m=3.0, omega=2.0, bandwidth=2e7)
        b = ch.make_link_budget(chp, 30.0, 0.1)
        assert cb.avg_comm_carbon(comm, chp, b, 650.0 / 3.6e6, 0.0, 30.0) == 0.0

    def test_structural_identity(self, comm):
        chp = ch.ChannelParams(m=3.0, omega=2.0, bandwidth=2e7)
        b = ch.make_link_budget(chp, 30.0, 0.1)
        z2 = 650.0 / 3.6e6
        val = cb.avg_comm_carbon(comm, chp, b, z2, 100.0, 30.0)
        expected = z2 * 30.0 * cb.avg_trans_time(comm, chp, b, 100.0) + 100.0 * comm.beta * (
            cb.comm_carbon_fixed_rate(comm, z2) / (1.0 - b.epsilon)
        )
        assert val == pytest.approx(expected, rel=1e-12)

    def test_against_conditional_monte_carlo(self, comm):
        # MC mean of instantaneous carbon estimates the Eq.-literal average
        # (fixed term without the 1/(1-eps) factor); see ledger.
        rng = np.random.default_rng(31)
        chp = ch.ChannelParams(
            m=float(rng.uniform(2, 12)),
            omega=float(rng.uniform(0.5, 10)),
            bandwidth=float(rng.uniform(15e6, 25e6)),
        )
        p = float(rng.uniform(5.0, 60.0))
        b = ch.make_link_budget(chp, p, 0.1)
        z2 = 650.0 / 3.6e6
        kappa = 100.0
        transmit = z2 * p * cb.avg_trans_time(comm, chp, b, kappa)
        fixed_literal = kappa * comm.beta * cb.comm_carbon_fixed_rate(comm, z2)
        mc_rng = num.make_rng(32)
        draws = ch.sample_snr_conditional_batch(chp, b, 1_000_000, mc_rng)
        inst = z2 * p * kappa * comm.beta / (chp.bandwidth * np.log2(1.0 + draws)) + fixed_literal
        assert float(inst.mean()) == pytest.approx(transmit + fixed_literal, rel=0.01)
        # and the artifact's average applies 1/(1-eps) to the fixed part
        val = cb.avg_comm_carbon(comm, chp, b, z2, kappa, p)
        assert val == pytest.approx(transmit + fixed_literal / 0.9, rel=1e-9)


class TestQoE:
    def test_zero(self):
        assert cb.qoe(cb.QoEModel(), 0.0) == 0.0

    def test_peak(self):
        assert cb.qoe(cb.QoEModel(a=2.0, b=40.0), 80.0) == pytest.approx(10.0, rel=1e-12)

    def test_feasible_band(self):
        # oracle: root-find Q(kappa) = 7 on both sides of the peak
        model = cb.QoEModel(a=2.0, b=40.0)
        f = lambda k: cb.qoe(model, k) - 7.0
        left = num.find_root(f, 1.0, 80.0, 1e-10)
        right = num.find_root(f, 80.0, 500.0, 1e-10)
        assert cb.qoe(model, left) == pytest.approx(7.0, abs=1e-9)
        assert cb.qoe(model, right) == pytest.approx(7.0, abs=1e-9)
        assert left == pytest.approx(41.3, abs=0.15)
        assert right == pytest.approx(137.7, abs=0.15)

    def test_unimodal(self):
        model = cb.QoEModel(a=2.0, b=40.0)
        ks = np.linspace(1.0, 400.0, 800)
        qs = np.array([cb.qoe(model, float(k)) for k in ks])
        peak = int(np.argmax(qs))
        assert (np.diff(qs[: peak + 1]) > 0).all()
        assert (np.diff(qs[peak:]) < 0).all()
        assert qs.max() <= 10.0 + 1e-12

    def test_domain(self):
        with pytest.raises(ValueError):
            cb.qoe(cb.QoEModel(), -1.0)


class TestEnergyProxy:
    def test_zero(self):
        assert cb.energy_proxy(cb.ConstraintSet(), 0.0, 0.0) == 0.0

    def test_arithmetic(self):
        assert cb.energy_proxy(cb.ConstraintSet(rho1=1.0, rho2=10.0), 100.0, 30.0) == 400.0

    def test_boundary_is_feasible(self):
        cs = cb.ConstraintSet(rho1=1.0, rho2=10.0, e_th=1600.0)
        assert cb.energy_proxy(cs, 1000.0, 60.0) == 1600.0
        assert cb.energy_proxy(cs, 1000.0, 60.0) <= cs.e_th


class TestProfiles:
    def test_validation(self):
        with pytest.raises(ValueError):
            cb.InferenceProfile(alpha=0.0)
        with pytest.raises(ValueError):
            cb.InferenceProfile(alpha=1.2)
        with pytest.raises(ValueError):
            cb.CommProfile(beta=0.0)
        with pytest.raises(ValueError):
            cb.CarbonIntensities(zeta1=0.0, zeta2=1.0)

    def test_kwh_conversion(self):
        z = cb.CarbonIntensities.from_kwh(100.0, 650.0)
        assert z.zeta1 == pytest.approx(100.0 / 3.6e6)
        assert z.zeta2 == pytest.approx(650.0 / 3.6e6)

    def test_lifespans_in_seconds(self):
        assert cb.InferenceProfile().t_dc == pytest.approx(9.4608e7)
        assert cb.CommProfile().t_bs == pytest.approx(3.1536e8)
