import numpy as np
import pytest

from superbsde.dual_mc import (ConstantControl, PiecewiseConstantControl,
                               ZeroControl, duality_gap, evaluate_control,
                               feedback_control)
from superbsde.forward_model import ForwardModel, ZeroDrift
from superbsde.generators import (PowerGenerator, QuadraticGenerator,
                                  conjugate_of)
from superbsde.hj_solver import GridSpec, solve
from superbsde.terminal_data import TerminalCondition

GRID = GridSpec(n_x=401, dt=5e-3, x_lo=-8.0, x_hi=8.0)


def bm_model():
    return ForwardModel(ZeroDrift(), 1.0, 1.0)


def gauss_expectation(tc, mean, var):
    from numpy.polynomial.hermite_e import hermegauss
    y, w = hermegauss(64)
    return float(np.asarray(tc(mean + np.sqrt(var) * y)) @ w / np.sqrt(2 * np.pi))


class TestEvaluateControl:
    def test_zero_control_matches_quadrature(self):
        from superbsde.forward_model import gaussian_terminal_law

        model = bm_model()
        gen = QuadraticGenerator(0.5)
        tc = TerminalCondition.analytic("inv_quad", amplitude=1.0)
        est = evaluate_control(model, gen, conjugate_of(gen), tc, ZeroControl(),
                               0.0, 0.0, 50_000, 100, seed=1)
        mean, var = gaussian_terminal_law(model, 0.0, 0.0)
        target = gauss_expectation(tc, mean, var)
        assert abs(est.value - target) <= 3.0 * est.std_error
        assert est.penalty_mean == 0.0

    def test_constant_payoff_decomposition(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("const", amplitude=0.3)
        est = evaluate_control(model, gen, conjugate_of(gen), tc,
                               ConstantControl(1.5), 0.0, 0.0, 500, 50, seed=2)
        assert est.value == pytest.approx(0.3 + est.penalty_mean, abs=1e-12)
        assert est.penalty_mean >= 0.0

    def test_constant_penalty_closed_form(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        conj = conjugate_of(gen)
        est = evaluate_control(model, gen, conj, tc=TerminalCondition.analytic("cos"),
                               ctrl=ConstantControl(2.0), x0=0.0, t0=0.0,
                               n_paths=64, n_steps=37, seed=3)
        assert est.penalty_mean == pytest.approx(conj.eval(2.0) * 1.0, rel=1e-12)

    def test_piecewise_constant_penalty(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        conj = conjugate_of(gen)
        ctrl = PiecewiseConstantControl([0.5], [1.0, 3.0])
        est = evaluate_control(model, gen, conj, TerminalCondition.analytic("cos"),
                               ctrl, 0.0, 0.0, 64, 100, seed=4)
        expected = 0.5 * conj.eval(1.0) + 0.5 * conj.eval(3.0)
        assert est.penalty_mean == pytest.approx(expected, rel=1e-10)

    def test_translation_shifts_value_exactly(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        conj = conjugate_of(gen)
        tc = TerminalCondition.analytic("cos", amplitude=0.5)
        up = tc.shifted(0.4)
        for ctrl in (ZeroControl(), ConstantControl(0.7)):
            a = evaluate_control(model, gen, conj, tc, ctrl, 0.0, 0.0, 2000, 50, seed=5)
            b = evaluate_control(model, gen, conj, up, ctrl, 0.0, 0.0, 2000, 50, seed=5)
            assert b.value - a.value == pytest.approx(0.4, abs=1e-12)


class TestFeedback:
    def test_constant_phi_gives_zero_rate(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("const", amplitude=0.7)
        sol = solve(model, gen, tc, GRID, 0.0)
        ctrl = feedback_control(sol, gen)
        assert np.max(np.abs(ctrl.rate(0.5, np.linspace(-3, 3, 11)))) == 0.0

    def test_rate_is_gradient_of_z(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("cos", amplitude=0.5)
        sol = solve(model, gen, tc, GRID, 0.0)
        xq = np.array([0.3, 1.2])
        z = sol.z_at(0.4, xq)
        assert np.allclose(ctrl_rate := feedback_control(sol, gen).rate(0.4, xq),
                           gen.grad(z))
        assert np.all(np.isfinite(ctrl_rate))

    def test_even_phi_zero_rate_at_origin(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("cos", amplitude=0.5)
        sol = solve(model, gen, tc, GRID, 0.0)
        mid = sol.x_grid[np.argmin(np.abs(sol.x_grid))]
        assert abs(feedback_control(sol, gen).rate(0.2, np.array([mid]))[0]) <= 1e-8


class TestDualityGap:
    def test_constant_phi_gap_zero(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        conj = conjugate_of(gen)
        tc = TerminalCondition.analytic("const", amplitude=0.7)
        sol = solve(model, gen, tc, GRID, 0.0)
        rep = duality_gap(model, gen, conj, tc, sol, 0.0, 0.0, 2000, seed=6,
                          n_steps=50)
        fb = [r for r in rep.rows if r.control_kind == "feedback"][0]
        assert abs(fb.attainment_gap) <= 1e-9
        assert rep.all_lower_bounds_pass

    def test_quadratic_attainment(self):
        model = bm_model()
        gen = QuadraticGenerator(0.5)
        conj = conjugate_of(gen)
        tc = TerminalCondition.analytic("inv_quad", amplitude=1.0)
        sol = solve(model, gen, tc,
                    GridSpec(n_x=801, dt=2e-3, x_lo=-8, x_hi=8), 0.0)
        rep = duality_gap(model, gen, conj, tc, sol, 0.0, 0.0, 20_000, seed=7,
                          n_steps=100)
        fb = [r for r in rep.rows if r.control_kind == "feedback"][0]
        assert fb.attainment_within_tol
        assert rep.all_lower_bounds_pass

    def test_superquadratic_zero_control_strictly_above(self):
        model = bm_model()
        gen = PowerGenerator(3.0)
        conj = conjugate_of(gen)
        tc = TerminalCondition.analytic("cos", amplitude=0.5)
        sol = solve(model, gen, tc, GRID, 0.0)
        rep = duality_gap(model, gen, conj, tc, sol, 0.0, 0.0, 20_000, seed=8,
                          n_steps=100)
        zero = [r for r in rep.rows if r.control_kind == "zero"][0]
        assert zero.value - rep.u0 > 3.0 * zero.std_error
        assert rep.all_lower_bounds_pass

    def test_csv_emission(self, tmp_path):
        model = bm_model()
        gen = PowerGenerator(3.0)
        conj = conjugate_of(gen)
        tc = TerminalCondition.analytic("const", amplitude=0.1)
        sol = solve(model, gen, tc, GRID, 0.0)
        rep = duality_gap(model, gen, conj, tc, sol, 0.0, 0.0, 200, seed=9,
                          n_steps=20, extra_controls=(ConstantControl(1.0),))
        path = tmp_path / "dual.csv"
        rep.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "control_kind,value,std_error,penalty_mean,pass"
        assert len(lines) == 4
