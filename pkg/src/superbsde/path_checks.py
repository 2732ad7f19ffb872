"""Path-level verifiers tying the PDE output back to the backward equation:
step/terminal residuals, the BMO energy bound, the a-priori Z and penalty
envelopes, and the gradient-blowup exponent fit.

All functions are pure over immutable inputs; reruns with the same
(seed, grid) are bit-identical.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ResolutionError, SuperbsdeError


class NoFitError(SuperbsdeError):
    """Exponent fit impossible (degenerate Z-field)."""


# levels closer to T than this many base steps are resolution-limited, not
# statements about the continuous bounds
EDGE_STEPS = 10


@dataclass(frozen=True)
class ResidualReport:
    rms_terminal_residual: float
    max_step_residual: float
    energy: float
    energy_se: float
    step_sizes: tuple
    excluded_fraction: float
    n_paths_used: int


def bsde_residual(sol, model, gen, bundle, max_excluded=0.01):
    """Pathwise consistency of (u, Z) with the backward dynamics.

    Along each untilted path, Y_s = u(s, X_s) and Z_s = Z(s, X_s) are read
    off the grid by bilinear interpolation.  Step residuals are
    |Y_{k+1} - Y_k - g(Z_k) dt + Z_k dB_k|; the terminal residual
    integrates the dynamics forward from u(t0, x0) and compares against
    Phi(X_T).  Paths leaving the spatial grid are excluded; more than
    `max_excluded` of them is a domain error.
    """
    if bundle.tilted:
        raise ValueError("bsde_residual expects an untilted bundle")
    x = bundle.x_paths
    inside = np.all((x >= sol.x_grid[0]) & (x <= sol.x_grid[-1]), axis=1)
    excluded = 1.0 - float(np.mean(inside))
    if excluded > max_excluded:
        raise DomainError(
            f"{excluded:.1%} of paths left the grid (limit {max_excluded:.1%})")
    x = x[inside]
    dw = bundle.noise[inside]
    n_used, n_knots = x.shape
    times = bundle.times
    dt = bundle.dt

    y = np.empty_like(x)
    z = np.empty((n_used, n_knots - 1))
    for k in range(n_knots):
        y[:, k] = sol.u_at(times[k], x[:, k])
        if k < n_knots - 1:
            z[:, k] = sol.z_at(times[k], x[:, k])
    gz = np.empty_like(z)
    for k in range(n_knots - 1):
        gz[:, k] = np.asarray(gen.eval(z[:, k]), dtype=float)

    increments = gz * dt - z * dw
    step_res = y[:, 1:] - y[:, :-1] - increments
    y_num_T = sol.u_at(bundle.t0, bundle.x0) + increments.sum(axis=1)
    terminal = y_num_T - np.asarray(sol.tc(x[:, -1]), dtype=float)
    energy_paths = (z * z).sum(axis=1) * dt
    return ResidualReport(
        rms_terminal_residual=float(np.sqrt(np.mean(terminal**2))),
        max_step_residual=float(np.max(np.abs(step_res))),
        energy=float(np.mean(energy_paths)),
        energy_se=float(np.std(energy_paths, ddof=1) / np.sqrt(n_used)),
        step_sizes=(dt, sol.dx),
        excluded_fraction=excluded,
        n_paths_used=int(n_used),
    )


@dataclass(frozen=True)
class BmoReport:
    energy: float
    bound: float
    slack: float
    passed: bool


def bmo_energy_check(report, sup_norm):
    """Sample E int Z^2 dt against the BMO bound 4 ||Phi||^2 (+ 3 SE)."""
    bound = 4.0 * sup_norm**2
    limit = bound + 3.0 * report.energy_se
    return BmoReport(energy=report.energy, bound=bound,
                     slack=limit - report.energy,
                     passed=report.energy <= limit)


@dataclass(frozen=True)
class EnvelopeReport:
    worst_ratio: float
    worst_time_to_go: float
    n_levels: int
    threshold_at_worst: float
    passed: bool
    skipped_reason: str = ""


def _window_levels(sol):
    tau = sol.level_time_to_go()
    keep = tau >= EDGE_STEPS * sol.dt - 1e-12
    return np.nonzero(keep)[0], tau


def apriori_z_bound(sol, model, sup_norm, safety_margin=0.0):
    """max_x |Z(s, .)| against 2 exp(lambda T) ||Phi|| (T-s)^{-1/2} on every
    level with T-s >= 10 dt."""
    idx, tau = _window_levels(sol)
    c1 = 2.0 * np.exp(model.lam * model.horizon)
    worst = -np.inf
    worst_tau = np.nan
    worst_thr = np.nan
    for k in idx:
        thr = c1 * sup_norm / np.sqrt(tau[k])
        ratio = float(np.max(np.abs(sol.z[k]))) / thr
        if ratio > worst:
            worst, worst_tau, worst_thr = ratio, float(tau[k]), float(thr)
    return EnvelopeReport(worst_ratio=float(worst), worst_time_to_go=worst_tau,
                          n_levels=int(idx.size), threshold_at_worst=worst_thr,
                          passed=worst <= 1.0 + safety_margin)


def _composite_convex(gen, conj, r_hi, n=256):
    """Numerical convexity probe of z -> f(g'(z)) on [0, r_hi] (the radial
    profile suffices; the composite is even)."""
    r = np.linspace(0.0, max(r_hi, 1.0), n)
    vals = np.asarray(conj.eval(np.asarray(gen.grad(r), dtype=float)), dtype=float)
    second = vals[2:] - 2.0 * vals[1:-1] + vals[:-2]
    return bool(np.all(second >= -1e-9 * max(1.0, np.max(np.abs(vals)))))


def penalty_bound_check(sol, gen, conj, sup_norm, safety_margin=0.0):
    """max_x f(g'(Z(s, .))) against 2 ||Phi|| (T-s)^{-1} where the composite
    f o g' is convex (for g = |z|^q it is (q-1)|z|^q); skipped otherwise."""
    zmax = float(np.max(np.abs(sol.z)))
    if not _composite_convex(gen, conj, zmax):
        return EnvelopeReport(worst_ratio=np.nan, worst_time_to_go=np.nan,
                              n_levels=0, threshold_at_worst=np.nan, passed=True,
                              skipped_reason="composite f(g'(.)) not convex")
    idx, tau = _window_levels(sol)
    worst = -np.inf
    worst_tau = np.nan
    worst_thr = np.nan
    for k in idx:
        thr = 2.0 * sup_norm / tau[k]
        comp = np.asarray(conj.eval(np.asarray(gen.grad(sol.z[k]), dtype=float)),
                          dtype=float)
        ratio = float(np.max(comp)) / thr
        if ratio > worst:
            worst, worst_tau, worst_thr = ratio, float(tau[k]), float(thr)
    return EnvelopeReport(worst_ratio=float(worst), worst_time_to_go=worst_tau,
                          n_levels=int(idx.size), threshold_at_worst=worst_thr,
                          passed=worst <= 1.0 + safety_margin)


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    stderr: float
    expected: float
    n_levels: int
    window: tuple


def exponent_fit(sol, q):
    """Least-squares slope of log max_x |Z(s,.)| vs log(T-s) over the window
    10 dt <= T-s <= T/10, compared with the predicted -1/q."""
    tau = sol.level_time_to_go()
    span = sol.horizon - sol.t0
    keep = (tau >= EDGE_STEPS * sol.dt - 1e-12) & (tau <= span / 10.0 + 1e-12)
    if int(np.count_nonzero(keep)) < 20:
        raise ResolutionError(
            "need >= 20 levels with 10 dt <= T-s <= T/10 for the exponent fit")
    zmax = np.max(np.abs(sol.z[keep]), axis=1)
    if np.max(zmax) < 1e-12:
        raise NoFitError("Z-field is degenerate (identically ~0)")
    lx = np.log(tau[keep])
    ly = np.log(zmax)
    n = lx.size
    coeffs, residuals, *_ = np.polyfit(lx, ly, 1, full=True)
    slope = float(coeffs[0])
    ssr = float(residuals[0]) if residuals.size else 0.0
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    stderr = float(np.sqrt(ssr / max(n - 2, 1) / sxx))
    return ExponentFit(slope=slope, stderr=stderr, expected=-1.0 / q,
                       n_levels=int(n), window=(float(EDGE_STEPS * sol.dt),
                                                float(span / 10.0)))
