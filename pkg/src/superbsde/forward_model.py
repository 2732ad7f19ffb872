"""Forward diffusion dX = b(s, X) ds + sigma dB, its variational flow, and
Euler-Maruyama simulation with optional Girsanov tilting.

The model is scalar (one spatial dimension, one Brownian driver, constant
sigma > 0); the drift carries its own spatial derivative so the flow
d(grad X) = b_x(X) grad X ds integrates with an exact exponential per
step.  Paths use counter-based Philox streams keyed by (seed, path index),
so bundles are reproducible bit-for-bit and path blocks could be sharded
across workers without shared RNG state.
"""

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from . import _kernels
from .errors import NotGaussianError, SimulationDivergedError


class Drift:
    """Drift b(t, x) with spatial derivative b_x(t, x), both vectorized."""

    zero = False

    def __call__(self, t, x):
        raise NotImplementedError

    def dx(self, t, x):
        raise NotImplementedError

    def sup_dx(self):
        """Exact sup |b_x| when known in closed form, else None."""
        return None

    def kernel_code(self):
        return None


class ZeroDrift(Drift):
    zero = True

    def __call__(self, t, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def dx(self, t, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def sup_dx(self):
        return 0.0

    def kernel_code(self):
        return (_kernels.DRIFT_ZERO, 0.0)

    def __repr__(self):
        return "ZeroDrift()"


class LinearDrift(Drift):
    """b(x) = beta * x."""

    def __init__(self, beta):
        self.beta = float(beta)

    def __call__(self, t, x):
        return self.beta * np.asarray(x, dtype=float)

    def dx(self, t, x):
        return np.full_like(np.asarray(x, dtype=float), self.beta)

    def sup_dx(self):
        return abs(self.beta)

    def kernel_code(self):
        return (_kernels.DRIFT_LINEAR, self.beta)

    def __repr__(self):
        return f"LinearDrift(beta={self.beta})"


class TanhDrift(Drift):
    """b(x) = scale * tanh(x); b_x = scale * (1 - tanh(x)^2), sup |b_x| = |scale|."""

    def __init__(self, scale):
        self.scale = float(scale)

    def __call__(self, t, x):
        return self.scale * np.tanh(np.asarray(x, dtype=float))

    def dx(self, t, x):
        th = np.tanh(np.asarray(x, dtype=float))
        return self.scale * (1.0 - th * th)

    def sup_dx(self):
        return abs(self.scale)

    def kernel_code(self):
        return (_kernels.DRIFT_TANH, self.scale)

    def __repr__(self):
        return f"TanhDrift(scale={self.scale})"


class CustomDrift(Drift):
    def __init__(self, fn, fn_dx, name="custom"):
        self.fn = fn
        self.fn_dx = fn_dx
        self.name = name

    def __call__(self, t, x):
        return np.asarray(self.fn(t, np.asarray(x, dtype=float)), dtype=float)

    def dx(self, t, x):
        return np.asarray(self.fn_dx(t, np.asarray(x, dtype=float)), dtype=float)

    def __repr__(self):
        return f"CustomDrift({self.name})"


class ForwardModel:
    """Scalar diffusion with constant sigma on the horizon [0, T]."""

    def __init__(self, drift, sigma, horizon, b_x_bound=None, lam=None):
        if not sigma > 0.0:
            raise ValueError("sigma must be positive")
        if not horizon > 0.0:
            raise ValueError("horizon must be positive")
        self.drift = drift
        self.sigma = float(sigma)
        self.horizon = float(horizon)
        if b_x_bound is None:
            b_x_bound = drift.sup_dx()
        if b_x_bound is None:
            b_x_bound = _probe_sup_dx(drift, horizon)
        self.b_x_bound = float(b_x_bound)
        # in the scalar case the structural constant lambda of the
        # drift/volatility compatibility inequality reduces to sup |b_x|
        self.lam = float(lam) if lam is not None else self.b_x_bound

    def __repr__(self):
        return (f"ForwardModel({self.drift!r}, sigma={self.sigma}, "
                f"T={self.horizon}, lambda={self.lam})")


def _probe_sup_dx(drift, horizon, n=512):
    rng = Generator(Philox(key=0))
    ts = rng.uniform(0.0, horizon, n)
    xs = rng.uniform(-20.0, 20.0, n)
    return float(np.max(np.abs(drift.dx(ts, xs))))


@dataclass
class PathBundle:
    """Simulated paths, flows and the Brownian increments that drove them.

    When a tilt was applied, `noise` holds the Q-Brownian increments (the
    tilted simulation is the Q-law; no density reweighting is involved).
    """

    times: np.ndarray
    x_paths: np.ndarray
    flow_paths: np.ndarray
    noise: np.ndarray
    seed: int
    stream_count: int
    x0: float
    t0: float
    tilted: bool = False

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    def to_csv(self, path):
        """One row per (path, step): path,t,x,flow,dB."""
        n_paths, n_knots = self.x_paths.shape
        with open(path, "w", newline="") as fh:
            fh.write("path,t,x,flow,dB\n")
            for p in range(n_paths):
                for k in range(n_knots):
                    db = self.noise[p, k - 1] if k > 0 else 0.0
                    fh.write(f"{p},{self.times[k]!r},{self.x_paths[p, k]!r},"
                             f"{self.flow_paths[p, k]!r},{db!r}\n")


def draw_increments(seed, n_paths, n_steps, dt):
    """Brownian increments from per-path Philox streams keyed (seed, path)."""
    dw = np.empty((n_paths, n_steps))
    root = np.sqrt(dt)
    for p in range(n_paths):
        g = Generator(Philox(key=(int(seed) << 64) + p))
        dw[p, :] = g.standard_normal(n_steps)
    dw *= root
    return dw


def simulate_paths(model, x0, t0, n_paths, n_steps, seed, tilt=None):
    """Euler-Maruyama paths of the (optionally tilted) diffusion.

    With a tilt q the drift becomes b + sigma*q and the stored increments
    are the Q-Brownian ones.  The variational flow integrates alongside
    with the exact per-step exponential exp(b_x dt).
    """
    if n_steps < 1:
        raise ValueError("need n_steps >= 1")
    if not t0 < model.horizon:
        raise ValueError("t0 must precede the horizon")
    dt = (model.horizon - t0) / n_steps
    dw = draw_increments(seed, n_paths, n_steps, dt)
    times = t0 + dt * np.arange(n_steps + 1)

    dcode = model.drift.kernel_code()
    tspec = _tilt_kernel_spec(tilt)
    if _kernels.USE_NUMBA and dcode is not None and tspec is not None:
        x, flow, bad = _kernels.em_paths_numba(
            float(x0), float(t0), dt, dw, model.sigma, dcode[0], dcode[1], *tspec)
    else:
        rate = None if tilt is None else tilt.rate
        x, flow, bad = _kernels.em_paths_numpy(
            float(x0), float(t0), dt, dw, model.sigma,
            model.drift, model.drift.dx, rate)
    if bad >= 0:
        raise SimulationDivergedError(bad)
    return PathBundle(times=times, x_paths=x, flow_paths=flow, noise=dw,
                      seed=int(seed), stream_count=int(n_paths),
                      x0=float(x0), t0=float(t0), tilted=tilt is not None)


_EMPTY = np.empty(0)
_EMPTY2 = np.empty((1, 1))


def _tilt_kernel_spec(tilt):
    """Kernel arguments for a tilt, or None when it needs the numpy path."""
    if tilt is None:
        return (_kernels.TILT_NONE, 0.0, _EMPTY, _EMPTY,
                0.0, 1.0, 2, 0.0, 1.0, 2, _EMPTY2, 0, 0.0)
    spec = getattr(tilt, "kernel_spec", None)
    return spec() if spec is not None else None


@dataclass(frozen=True)
class CompatReport:
    """Outcome of probing the drift/volatility compatibility inequality."""

    lam: float
    measured_sup: float
    worst_t: float
    worst_x: float
    passed: bool


def check_compat_417(model, probe_count, seed=0):
    """Probe |eta^T sigma sigma^T b_x^T eta| <= lambda |eta^T sigma|^2; in the
    scalar case this is sup |b_x| <= lambda."""
    if probe_count < 1:
        raise ValueError("need probe_count >= 1")
    rng = Generator(Philox(key=(int(seed) << 64) + 0x417))
    ts = rng.uniform(0.0, model.horizon, probe_count)
    xs = rng.uniform(-20.0, 20.0, probe_count)
    vals = np.abs(model.drift.dx(ts, xs))
    worst = int(np.argmax(vals))
    measured = float(vals[worst])
    return CompatReport(lam=model.lam, measured_sup=measured,
                        worst_t=float(ts[worst]), worst_x=float(xs[worst]),
                        passed=measured <= model.lam + 1e-12)


def gaussian_terminal_law(model, x0, t0):
    """Exact (mean, variance) of X_T for the driftless model."""
    if not model.drift.zero:
        raise NotGaussianError("terminal law is Gaussian only for zero drift")
    return float(x0), model.sigma**2 * (model.horizon - t0)
