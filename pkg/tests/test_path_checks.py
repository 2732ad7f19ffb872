import numpy as np
import pytest

from superbsde.errors import DomainError, ResolutionError
from superbsde.forward_model import (ForwardModel, LinearDrift, ZeroDrift,
                                     simulate_paths)
from superbsde.generators import (PowerGenerator, QuadraticGenerator,
                                  conjugate_of)
from superbsde.hj_solver import GridSpec, solve
from superbsde.path_checks import (NoFitError, apriori_z_bound,
                                   bmo_energy_check, bsde_residual,
                                   exponent_fit, penalty_bound_check)
from superbsde.terminal_data import TerminalCondition

GRID = GridSpec(n_x=401, dt=5e-3, x_lo=-8.0, x_hi=8.0)


def bm_model():
    return ForwardModel(ZeroDrift(), 1.0, 1.0)


class TestResidual:
    def test_constant_phi_residuals_vanish(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("const", amplitude=0.7)
        sol = solve(model, gen, tc, GRID, 0.0)
        bundle = simulate_paths(model, 0.0, 0.0, 200, 50, seed=1)
        rep = bsde_residual(sol, model, gen, bundle)
        assert rep.rms_terminal_residual <= 1e-10
        assert rep.max_step_residual <= 1e-10
        assert rep.energy == 0.0

    def test_refinement_shrinks_terminal_residual(self):
        model = bm_model()
        gen = QuadraticGenerator(0.5)
        tc = TerminalCondition.analytic("inv_quad", amplitude=1.0)
        coarse = solve(model, gen, tc, GridSpec(n_x=401, dt=4e-3, x_lo=-8, x_hi=8), 0.0)
        fine = solve(model, gen, tc, GridSpec(n_x=801, dt=2e-3, x_lo=-8, x_hi=8), 0.0)
        b1 = simulate_paths(model, 0.0, 0.0, 4000, 50, seed=2)
        b2 = simulate_paths(model, 0.0, 0.0, 4000, 200, seed=2)
        r1 = bsde_residual(coarse, model, gen, b1)
        r2 = bsde_residual(fine, model, gen, b2)
        assert r1.rms_terminal_residual / r2.rms_terminal_residual >= 1.5

    def test_refinement_superquadratic(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("cos", amplitude=0.5)
        coarse = solve(model, gen, tc, GridSpec(n_x=401, dt=4e-3, x_lo=-8, x_hi=8), 0.0)
        fine = solve(model, gen, tc, GridSpec(n_x=801, dt=2e-3, x_lo=-8, x_hi=8), 0.0)
        b1 = simulate_paths(model, 0.0, 0.0, 4000, 50, seed=3)
        b2 = simulate_paths(model, 0.0, 0.0, 4000, 200, seed=3)
        r1 = bsde_residual(coarse, model, gen, b1)
        r2 = bsde_residual(fine, model, gen, b2)
        assert r1.rms_terminal_residual / r2.rms_terminal_residual >= 1.5

    def test_domain_error_when_paths_escape(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("cos", amplitude=0.5)
        sol = solve(model, gen, tc, GridSpec(n_x=64, dt=5e-3, x_lo=-1, x_hi=1), 0.0)
        bundle = simulate_paths(model, 0.0, 0.0, 500, 50, seed=4)
        with pytest.raises(DomainError):
            bsde_residual(sol, model, gen, bundle)

    def test_tilted_bundle_rejected(self):
        from superbsde.dual_mc import ConstantControl
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("cos", amplitude=0.5)
        sol = solve(model, gen, tc, GRID, 0.0)
        bundle = simulate_paths(model, 0.0, 0.0, 10, 10, seed=5,
                                tilt=ConstantControl(1.0))
        with pytest.raises(ValueError):
            bsde_residual(sol, model, gen, bundle)

    def test_deterministic_rerun(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("cos", amplitude=0.5)
        sol = solve(model, gen, tc, GRID, 0.0)
        b = simulate_paths(model, 0.0, 0.0, 300, 50, seed=6)
        r1 = bsde_residual(sol, model, gen, b)
        r2 = bsde_residual(sol, model, gen, b)
        assert r1 == r2


class TestBmo:
    def test_constant_phi(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("const", amplitude=0.5)
        sol = solve(model, gen, tc, GRID, 0.0)
        bundle = simulate_paths(model, 0.0, 0.0, 100, 20, seed=7)
        rep = bsde_residual(sol, model, gen, bundle)
        check = bmo_energy_check(rep, 0.5)
        assert check.passed and check.bound == 1.0

    def test_cos_energy_within_bound(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("cos", amplitude=0.5)
        sol = solve(model, gen, tc, GRID, 0.0)
        bundle = simulate_paths(model, 0.0, 0.0, 4000, 100, seed=8)
        rep = bsde_residual(sol, model, gen, bundle)
        assert bmo_energy_check(rep, tc.sup_norm).passed

    def test_bound_scaling(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("cos", amplitude=1.0)
        sol = solve(model, gen, tc, GRID, 0.0)
        bundle = simulate_paths(model, 0.0, 0.0, 4000, 100, seed=9)
        rep = bsde_residual(sol, model, gen, bundle)
        check = bmo_energy_check(rep, 1.0)
        assert check.bound == 4.0 and check.passed


class TestEnvelopes:
    def test_constant_phi_zero_ratio(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("const", amplitude=0.5)
        sol = solve(model, gen, tc, GRID, 0.0)
        rep = apriori_z_bound(sol, model, 0.5)
        assert rep.worst_ratio == 0.0 and rep.passed

    def test_threshold_value_driftless(self):
        # with lambda = 0 and ||Phi|| = 1 the envelope is 2 (T-s)^{-1/2}
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("cos", amplitude=1.0)
        sol = solve(model, gen, tc, GRID, 0.0)
        rep = apriori_z_bound(sol, model, 1.0)
        tau = rep.worst_time_to_go
        assert rep.threshold_at_worst == pytest.approx(2.0 / np.sqrt(tau))
        assert rep.passed

    def test_penalty_composite_value(self):
        # f(g'(z)) = (q-1)|z|^q for the power kind
        gen = PowerGenerator(3.0)
        conj = conjugate_of(gen)
        z = 1.7
        assert conj.eval(gen.grad(z)) == pytest.approx(2.0 * z**3, rel=1e-12)

    def test_penalty_envelope_threshold(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        conj = conjugate_of(gen)
        tc = TerminalCondition.analytic("cos", amplitude=1.0)
        sol = solve(model, gen, tc, GRID, 0.0)
        rep = penalty_bound_check(sol, gen, conj, 1.0)
        assert not rep.skipped_reason
        tau = rep.worst_time_to_go
        assert rep.threshold_at_worst == pytest.approx(2.0 / tau)
        assert rep.passed

    def test_nonconvex_composite_skipped(self):
        # sampled generator with a kink makes f(g'(.)) non-convex in general
        r = np.array([0.0, 0.5, 1.0, 2.0, 4.0])
        g = np.array([0.0, 0.05, 0.4, 3.0, 40.0])
        from superbsde.generators import SampledGenerator, Conjugate
        gen = SampledGenerator(r, g)
        conj = Conjugate(gen)
        model = bm_model()
        tc = TerminalCondition.analytic("cos", amplitude=0.5)
        sol = solve(model, PowerGenerator(3.0), tc, GRID, 0.0)
        rep = penalty_bound_check(sol, gen, conj, 0.5)
        assert rep.skipped_reason or rep.passed


class TestExponentFit:
    def test_constant_phi_no_fit(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("const", amplitude=0.5)
        sol = solve(model, gen, tc,
                    GridSpec(n_x=64, dt=1e-3, x_lo=-8, x_hi=8), 0.0)
        with pytest.raises(NoFitError):
            exponent_fit(sol, 3.0)

    def test_too_few_levels_rejected(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("cos", amplitude=0.5)
        sol = solve(model, gen, tc, GridSpec(n_x=64, dt=0.1, x_lo=-8, x_hi=8), 0.0)
        with pytest.raises(ResolutionError):
            exponent_fit(sol, 3.0)

    def test_exponent_for_rough_data(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        rough = TerminalCondition.step(0.0, -1.0, 1.0).inf_convolved(50.0)
        sol = solve(model, gen, rough,
                    GridSpec(n_x=801, dt=1e-3, x_lo=-8, x_hi=8), 0.0)
        fit = exponent_fit(sol, 3.0)
        assert abs(fit.slope - (-1.0 / 3.0)) <= 0.15


class TestFlowIdentity:
    def test_pathwise_gradient_identity(self):
        # -u_x(s, X_s) (grad X)^{-1} sigma * grad X == z-field at (s, X_s):
        # with the exact exponential flow this is an identity, so it checks
        # the flow wiring end to end
        model = ForwardModel(LinearDrift(0.3), 1.0, 1.0)
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("cos", amplitude=0.5)
        sol = solve(model, gen, tc, GRID, 0.0)
        bundle = simulate_paths(model, 0.0, 0.0, 50, 40, seed=10)
        k = 17
        t = bundle.times[k]
        xs = bundle.x_paths[:, k]
        flow = bundle.flow_paths[:, k]
        z = sol.z_at(t, xs)
        ux = -z / model.sigma
        lhs = -ux * (1.0 / flow) * model.sigma * flow
        assert np.allclose(lhs, z, rtol=1e-12)
        assert np.all(flow > 0.0)
