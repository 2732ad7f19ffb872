"""The jitted kernels and their numpy twins must agree to rounding."""

import numpy as np
import pytest

from superbsde import _kernels
from superbsde.dual_mc import FeedbackControl, ZeroControl
from superbsde.forward_model import (ForwardModel, TanhDrift, ZeroDrift,
                                     draw_increments)
from superbsde.generators import PowerGenerator
from superbsde.hj_solver import GridSpec, solve
from superbsde.terminal_data import TerminalCondition

pytestmark = pytest.mark.skipif(not _kernels.USE_NUMBA,
                                reason="numba disabled; only one path to test")


class TestHjStep:
    @pytest.mark.parametrize("kind,par", [(_kernels.GEN_POWER, 3.0),
                                          (_kernels.GEN_QUADRATIC, 0.5)])
    def test_paths_agree(self, kind, par):
        rng = np.random.default_rng(1)
        n = 257
        x = np.linspace(-4.0, 4.0, n)
        u = 0.4 * np.cos(x) + 0.05 * rng.standard_normal(n)
        bvals = 0.3 * np.tanh(x)
        dx = float(x[1] - x[0])
        if kind == _kernels.GEN_POWER:
            h = lambda r: r**par
            hp = lambda r: par * r ** (par - 1.0)
        else:
            h = lambda r: par * r * r
            hp = lambda r: 2.0 * par * r
        a, na, ca = _kernels.hj_base_step_numba(u, bvals, dx, 1.0, kind, par,
                                                5.0, 1e-3, 1 << 20)
        b, nb, cb = _kernels.hj_base_step_numpy(u, bvals, dx, 1.0, h, hp,
                                                5.0, 1e-3, 1 << 20)
        assert na == nb and ca == cb
        assert np.allclose(a, b, rtol=1e-12, atol=1e-14)

    def test_cap_flag_agrees(self):
        x = np.linspace(-2.0, 2.0, 129)
        u = np.abs(x)  # slope 1 > cap
        dx = float(x[1] - x[0])
        a, _, ca = _kernels.hj_base_step_numba(u, np.zeros_like(x), dx, 1.0,
                                               _kernels.GEN_POWER, 3.0, 0.5,
                                               1e-3, 1 << 20)
        b, _, cb = _kernels.hj_base_step_numpy(u, np.zeros_like(x), dx, 1.0,
                                               lambda r: r**3,
                                               lambda r: 3 * r**2, 0.5,
                                               1e-3, 1 << 20)
        assert ca and cb
        assert np.allclose(a, b, rtol=1e-12)


class TestEmPaths:
    def test_untilted_agree(self):
        dw = draw_increments(3, 64, 32, 1.0 / 32)
        drift = TanhDrift(0.3)
        xa, fa, da = _kernels.em_paths_numba(
            0.2, 0.0, 1.0 / 32, dw, 1.0, _kernels.DRIFT_TANH, 0.3,
            *_tilt_none())
        xb, fb, db = _kernels.em_paths_numpy(0.2, 0.0, 1.0 / 32, dw, 1.0,
                                             drift, drift.dx, None)
        assert da == db == -1
        assert np.allclose(xa, xb, rtol=1e-13)
        assert np.allclose(fa, fb, rtol=1e-13)

    def test_feedback_tilt_agree(self):
        model = ForwardModel(ZeroDrift(), 1.0, 1.0)
        gen = PowerGenerator(3.0)
        tc = TerminalCondition.analytic("cos", amplitude=0.5)
        sol = solve(model, gen, tc,
                    GridSpec(n_x=201, dt=0.01, x_lo=-6, x_hi=6), 0.0)
        ctrl = FeedbackControl(sol, gen)
        dw = draw_increments(4, 32, 25, 1.0 / 25)
        spec = ctrl.kernel_spec()
        xa, fa, da = _kernels.em_paths_numba(0.1, 0.0, 1.0 / 25, dw, 1.0,
                                             _kernels.DRIFT_ZERO, 0.0, *spec)
        drift = ZeroDrift()
        xb, fb, db = _kernels.em_paths_numpy(0.1, 0.0, 1.0 / 25, dw, 1.0,
                                             drift, drift.dx, ctrl.rate)
        assert da == db == -1
        assert np.allclose(xa, xb, rtol=1e-10, atol=1e-12)


def _tilt_none():
    return ZeroControl().kernel_spec()


class TestEnvFlag:
    def test_flag_reflects_environment(self, tmp_path):
        import subprocess
        import sys

        code = ("import superbsde._kernels as k; "
                "print(k.USE_NUMBA)")
        out = subprocess.run([sys.executable, "-c", code],
                             env={"PATH": "/usr/bin:/bin",
                                  "SUPERBSDE_DISABLE_NUMBA": "1"},
                             capture_output=True, text=True, cwd="/root/pkg")
        assert out.stdout.strip() == "False"
