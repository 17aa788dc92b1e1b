import math

import numpy as np
import pytest

from carbonrl import carbon as cb
from carbonrl import channel as ch
from carbonrl import env
from carbonrl import numerics as num


@pytest.fixture(scope="module")
def cfg():
    return env.EnvConfig()


FIXED_STATE = env.State(m=7.0, omega=5.0, bandwidth=20e6, zeta1=100.0, zeta2=650.0)


class TestSampleState:
    def test_within_ranges(self):
        rng = num.make_rng(0)
        ranges = env.StateRanges()
        for _ in range(2000):
            s = env.sample_state(ranges, rng)
            arr = s.as_array()
            for v, r in zip(arr, ranges.as_tuple()):
                assert r.lo <= v <= r.hi

    def test_uniform_mean(self):
        rng = num.make_rng(1)
        ranges = env.StateRanges()
        ms = np.array([env.sample_state(ranges, rng).m for _ in range(100_000)])
        assert ms.mean() == pytest.approx(7.0, abs=0.05)

    def test_degenerate_range(self):
        rng = num.make_rng(2)
        ranges = env.StateRanges(m=env.Range(4.0, 4.0))
        assert all(env.sample_state(ranges, rng).m == 4.0 for _ in range(100))


class TestEvaluate:
    def test_qoe_peak_feasible(self, cfg):
        report = env.evaluate(FIXED_STATE, env.Action(kappa=80, p_trans=10.0), cfg)
        assert report.qoe == pytest.approx(10.0, rel=1e-12)
        assert "qoe" not in report.violated
        assert report.feasible

    def test_large_kappa_violates_qoe_and_infer_time(self, cfg):
        report = env.evaluate(FIXED_STATE, env.Action(kappa=1000, p_trans=10.0), cfg)
        assert "qoe" in report.violated
        assert "t_infer" in report.violated
        assert report.qoe < 7.0
        assert report.t_infer > 0.3
        assert report.t_infer == pytest.approx(0.352, abs=2e-3)
        assert not report.feasible

    def test_power_cap(self, cfg):
        for kappa in (50, 80, 500):
            report = env.evaluate(FIXED_STATE, env.Action(kappa=kappa, p_trans=61.0), cfg)
            assert "p_max" in report.violated

    def test_matches_module_level_ops(self, cfg):
        action = env.Action(kappa=90, p_trans=25.0)
        report = env.evaluate(FIXED_STATE, action, cfg)
        chp = ch.ChannelParams(
            m=FIXED_STATE.m,
            omega=FIXED_STATE.omega,
            noise_var=cfg.noise_var,
            bandwidth=FIXED_STATE.bandwidth,
        )
        budget = ch.make_link_budget(chp, action.p_trans, cfg.epsilon)
        z = cb.CarbonIntensities.from_kwh(FIXED_STATE.zeta1, FIXED_STATE.zeta2)
        assert report.carbon_infer == pytest.approx(
            cb.inference_carbon(cfg.infer, z.zeta1, action.kappa), rel=1e-12
        )
        assert report.carbon_comm == pytest.approx(
            cb.avg_comm_carbon(cfg.comm, chp, budget, z.zeta2, action.kappa, action.p_trans),
            rel=1e-9,
        )
        assert report.t_infer == pytest.approx(cb.inference_time(cfg.infer, action.kappa), rel=1e-12)
        assert report.t_trans_avg == pytest.approx(
            cb.avg_trans_time(cfg.comm, chp, budget, action.kappa), rel=1e-9
        )
        assert report.qoe == pytest.approx(cb.qoe(cfg.qoe, action.kappa), rel=1e-12)
        assert report.energy == pytest.approx(
            cb.energy_proxy(cfg.constraints, action.kappa, action.p_trans), rel=1e-12
        )

    def test_deterministic(self, cfg):
        a = env.evaluate(FIXED_STATE, env.Action(kappa=77, p_trans=3.3), cfg)
        b = env.evaluate(FIXED_STATE, env.Action(kappa=77, p_trans=3.3), cfg)
        assert a == b


class TestReward:
    def test_penalty(self, cfg):
        report = env.evaluate(FIXED_STATE, env.Action(kappa=1000, p_trans=10.0), cfg)
        assert env.reward(report, cfg) == -100.0

    def test_mg_scaling(self, cfg):
        report = env.EvalReport(
            feasible=True,
            carbon_total=0.01843,
            carbon_infer=0.018,
            carbon_comm=0.00043,
            qoe=9.0,
            energy=100.0,
            t_infer=0.05,
            t_trans_avg=1e-4,
            violated=(),
        )
        assert env.reward(report, cfg) == pytest.approx(-18.43, rel=1e-12)

    def test_monotone_in_carbon(self, cfg):
        rewards = []
        for kappa in (42, 60, 90, 130):
            report = env.evaluate(FIXED_STATE, env.Action(kappa=kappa, p_trans=5.0), cfg)
            assert report.feasible
            rewards.append(env.reward(report, cfg))
        assert all(a > b for a, b in zip(rewards, rewards[1:]))

    def test_reward_range_randomized(self, cfg):
        rng = num.make_rng(3)
        for _ in range(20_000):
            s = env.sample_state(cfg.ranges, rng)
            raw = rng.uniform(-1.0, 1.0, size=2)
            tr = env.step(s, raw, cfg, rng)
            assert tr.reward == -100.0 or -100.0 < tr.reward < 0.0


class TestStep:
    def test_affine_corners(self, cfg):
        assert cfg.action_from_raw(np.array([-1.0, -1.0])) == env.Action(1, 0.1)
        hi = cfg.action_from_raw(np.array([1.0, 1.0]))
        assert hi.kappa == 1000 and hi.p_trans == pytest.approx(60.0)

    def test_midpoint(self, cfg):
        mid = cfg.action_from_raw(np.array([0.0, 0.0]))
        assert mid.kappa == round((1 + 1000) / 2)
        assert mid.p_trans == pytest.approx((0.1 + 60.0) / 2)

    def test_transition_fields(self, cfg):
        rng = num.make_rng(4)
        s = env.sample_state(cfg.ranges, rng)
        tr = env.step(s, np.array([0.2, -0.3]), cfg, rng)
        assert tr.state == s
        assert tr.next_state != s
        assert tr.report.feasible == (tr.reward != -100.0) or tr.reward != -100.0


class TestGridOracle:
    def test_all_infeasible_corner(self):
        cfg = env.EnvConfig(qoe=cb.QoEModel(q_max=5.0), constraints=cb.ConstraintSet(q_th=7.0))
        action, best = env.grid_oracle(FIXED_STATE, 50, cfg)
        assert best == -100.0
        assert action == env.Action(kappa=1, p_trans=0.1)

    def test_nested_grid_refinement(self, cfg):
        rng = num.make_rng(5)
        for _ in range(5):
            s = env.sample_state(cfg.ranges, rng)
            _, coarse = env.grid_oracle(s, 101, cfg)
            _, fine = env.grid_oracle(s, 401, cfg)
            assert fine >= coarse - 1e-9

    def test_fixed_state_optimum_low_kappa_edge(self, cfg):
        action, best = env.grid_oracle(FIXED_STATE, 1000, cfg)
        assert action.kappa == 42
        assert best > -100.0
        # cross-check by 1-D refinement in power at the chosen kappa
        ps = np.linspace(cfg.box.p_min, cfg.box.p_max, 5000)
        rewards = []
        for p in ps:
            report = env.evaluate(FIXED_STATE, env.Action(42, float(p)), cfg)
            rewards.append(env.reward(report, cfg))
        refined = max(rewards)
        assert best == pytest.approx(refined, abs=1e-4)
        assert best <= refined + 1e-12

    def test_resolution_validation(self, cfg):
        with pytest.raises(ValueError):
            env.grid_oracle(FIXED_STATE, 1, cfg)

    def test_feasible_set_nonempty(self, cfg):
        rng = num.make_rng(6)
        for _ in range(1000):
            s = env.sample_state(cfg.ranges, rng)
            _, best = env.grid_oracle(s, 200, cfg)
            assert best > -100.0


class TestEvalReportInvariant:
    def test_flag_must_match_violations(self):
        with pytest.raises(ValueError):
            env.EvalReport(
                feasible=True,
                carbon_total=0.1,
                carbon_infer=0.1,
                carbon_comm=0.0,
                qoe=5.0,
                energy=1.0,
                t_infer=0.1,
                t_trans_avg=0.1,
                violated=("qoe",),
            )
