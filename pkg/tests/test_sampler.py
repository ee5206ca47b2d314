import numpy as np
import pytest
from oracles import BIAS_PROXY_K1, G_V9

from sparse_sgmcmc.model import LayerSpec, Network, ParamState
from sparse_sgmcmc.sampler import (
    PreconditionerState,
    SamplerConfig,
    ScheduleSet,
    bias_proxy,
    precondition,
    prune,
    sparse_rate,
    step_psgld,
    step_sgld,
    update_preconditioner,
    validate_schedules,
)

from sparse_sgmcmc.presets import REGRESSION_SCHEDULES as PRESET


class TestSgldStep:
    def test_no_gradient_no_noise(self):
        p = ParamState(np.array([1.0, -2.0]))
        out = step_sgld(p, np.zeros(2), 0.1, 1.0, np.zeros(2))
        np.testing.assert_array_equal(out.beta, p.beta)

    def test_formula(self):
        beta, g, z = np.array([0.3, 1.0]), np.array([2.0, -4.0]), np.array([0.5, -1.5])
        out = step_sgld(ParamState(beta), g, 0.5, 1.0, z)
        np.testing.assert_allclose(out.beta, beta + 0.5 * g + z, rtol=1e-15)

    def test_temperature(self):
        out = step_sgld(ParamState(np.zeros(1)), np.zeros(1), 0.5, 4.0, np.ones(1))
        assert out.beta[0] == pytest.approx(0.5)

    def test_mask_reapplied(self):
        p = ParamState(np.zeros(3), np.array([False, True, False]))
        out = step_sgld(p, np.ones(3), 0.1, 1.0, np.ones(3))
        assert out.beta[1] == 0.0 and out.pruned[1]

    def test_non_finite_aborts_with_iteration(self):
        with pytest.raises(FloatingPointError, match="iteration 17"):
            step_sgld(ParamState(np.zeros(1)), np.array([np.inf]), 0.1, 1.0, np.zeros(1), k=17)

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            step_sgld(ParamState(np.zeros(1)), np.zeros(1), 0.0, 1.0, np.zeros(1))


class TestPreconditioner:
    def test_first_call(self):
        st = update_preconditioner(PreconditionerState.zeros(2), np.array([3.0, -1.0]), 0.9)
        np.testing.assert_array_equal(st.V, [9.0, 1.0])

    def test_decay(self):
        st = PreconditionerState(np.array([4.0]), 1, 1e-3, True)
        assert update_preconditioner(st, np.zeros(1), 0.9).V[0] == pytest.approx(3.6)

    def test_mix(self):
        st = PreconditionerState(np.array([1.0]), 1, 1e-3, True)
        assert update_preconditioner(st, np.array([2.0]), 0.99).V[0] == pytest.approx(1.03)

    def test_swapped_convention(self):
        st = PreconditionerState(np.array([1.0]), 1, 1e-3, True, convention="swapped")
        assert update_preconditioner(st, np.array([2.0]), 0.99).V[0] == pytest.approx(0.01 + 0.99 * 4)

    def test_clip_only_in_moment(self):
        st = update_preconditioner(PreconditionerState.zeros(1), np.array([1e9]), 0.9)
        assert st.V[0] == 1e12

    def test_G_values(self):
        assert precondition(PreconditionerState(np.zeros(3), eta=1.0)).tolist() == [1.0] * 3
        assert precondition(PreconditionerState(np.array([9.0]), eta=1e-3))[0] == pytest.approx(G_V9, rel=1e-15)
        big = precondition(PreconditionerState(np.array([1e300]), eta=1e-3))[0]
        assert 0 < big < 1e-149

    def test_psgld_zero_gradient_decays(self):
        p = ParamState(np.array([0.7]))
        st = PreconditionerState(np.array([2.0]), 3, 1e-3, True)
        out, st2 = step_psgld(p, np.zeros(1), st, 0.01, 1.0, np.zeros(1), 0.95)
        assert out.beta[0] == 0.7
        assert st2.V[0] == pytest.approx(1.9)

    def test_psgld_formula(self):
        beta, g, z = np.array([0.2, -0.4]), np.array([1.0, 3.0]), np.array([0.3, -0.2])
        out, st = step_psgld(ParamState(beta), g, PreconditionerState.zeros(2, eta=0.5), 0.01, 2.0, z, 0.9)
        G = 1 / (0.5 + np.abs(g))
        np.testing.assert_allclose(out.beta, beta + 0.01 * G * g + np.sqrt(0.01) * np.sqrt(G) * z, rtol=1e-14)

    def test_reduction_to_sgld(self):
        rng = np.random.default_rng(5)
        a = ParamState(rng.standard_normal(4))
        b = a.copy()
        st = PreconditionerState.zeros(4, eta=1.0, frozen=True)
        for k in range(1, 200):
            g, z = rng.standard_normal(4), rng.standard_normal(4)
            a = step_sgld(a, g, 0.01, 1.0, z)
            b, st = step_psgld(b, g, st, 0.01, 1.0, z, 0.9)
        assert a.beta.tobytes() == b.beta.tobytes()


class TestSchedules:
    def test_preset_schedules_ok(self):
        assert validate_schedules(PRESET) == []

    def test_gamma_omega(self):
        assert "γ_ω outside (0.5,1]" in validate_schedules(ScheduleSet(omega_gamma=0.4))

    def test_zero_constant(self):
        assert "nonpositive constant" in validate_schedules(ScheduleSet(omega_c1=0.0))

    def test_several_reported(self):
        v = validate_schedules(ScheduleSet(eps_gamma=1.5, omega_gamma=1.2, alpha_floor=1.0, eps_d=-1.0))
        assert len(v) == 4

    def test_values(self):
        assert PRESET.eps(8) == pytest.approx(0.025)
        assert PRESET.omega(0) == pytest.approx(100 * 100**-0.7)
        assert PRESET.alpha(1) == 0.9

    def test_alpha_monotone(self):
        a = PRESET.alpha(np.arange(1, 200_000))
        assert np.all(np.diff(a) >= 0)
        assert 1 - PRESET.alpha(1e12) < 1e-5


class TestPrune:
    def net(self):
        return Network([LayerSpec(4, 1, "identity", sparse=True, bias=True)])

    def test_example(self):
        p = ParamState(np.array([0.5, -0.01, 2.0, 0.001, 9.0]))
        out = prune(p, self.net(), 50)
        assert out.pruned.tolist() == [False, True, False, True, False]
        assert out.beta.tolist() == [0.5, 0.0, 2.0, 0.0, 9.0]

    def test_zero_rate(self):
        p = ParamState(np.arange(5.0))
        assert prune(p, self.net(), 0).pruned.sum() == 0

    def test_ties_by_index(self):
        p = ParamState(np.array([1.0, -1.0, 1.0, 1.0, 0.0]))
        assert prune(p, self.net(), 25).pruned.tolist() == [True, False, False, False, False]

    def test_previously_pruned_count(self):
        p = ParamState(np.array([5.0, 0.0, 1.0, 2.0, 0.0]), np.array([False, True, False, False, False]))
        out = prune(p, self.net(), 50)
        assert out.pruned.tolist() == [False, True, True, False, False]
        assert sparse_rate(out, self.net()) == 0.5

    def test_monotone_mask(self):
        p = ParamState(np.array([0.0, 3.0, 1.0, 2.0, 0.0]), np.array([True, False, False, False, False]))
        p.beta[0] = 0.0
        out = prune(p, self.net(), 25)
        assert out.pruned[0] and out.pruned.sum() == 1

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            prune(ParamState(np.zeros(5)), self.net(), 100)


class TestBiasProxy:
    def test_alpha_one(self):
        s = ScheduleSet(omega_c1=1e-300, alpha_floor=0.5)
        assert bias_proxy(s, 10).total == pytest.approx(0.0, abs=1e-290)

    def test_k1(self):
        s = ScheduleSet(omega_c1=0.1, omega_c2=0.0, omega_gamma=0.7, alpha_floor=0.9)
        bp = bias_proxy(s, 1)
        assert bp.total == pytest.approx(BIAS_PROXY_K1, rel=1e-14)
        assert bp.last_gap == pytest.approx(0.1)

    def test_ratio_decreases(self):
        s = ScheduleSet(omega_c1=0.1, omega_c2=0.0, omega_gamma=0.7, alpha_floor=0.9)
        r = [bias_proxy(s, K).ratio for K in (10**3, 10**4, 10**5)]
        assert r[0] > r[1] > r[2]

    def test_floor_binds_early(self):
        # while 1 - omega_k < floor the per-step gap is constant
        bp3, bp4 = bias_proxy(PRESET, 10**3), bias_proxy(PRESET, 10**4)
        assert bp3.ratio == pytest.approx(bp4.ratio, rel=1e-12)
        assert bp4.last_gap == pytest.approx(0.1)


class TestSamplerConfig:
    def test_variants(self):
        assert SamplerConfig("psgld-sa").preconditioned and SamplerConfig("psgld-sa").adaptive
        assert not SamplerConfig("sgld").preconditioned and not SamplerConfig("psgld").adaptive

    @pytest.mark.parametrize(
        "kwargs",
        [{"variant": "adam"}, {"tau": 0.0}, {"thinning": 0}, {"prune_plan": ((10, 50), (20, 30))}, {"v_convention": "x"}],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            SamplerConfig(**kwargs)
