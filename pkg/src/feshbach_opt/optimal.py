"""Optimal-protocol synthesis.

The classical stiffness kbar(s) minimizing

    J = int_{s_i}^{s_f} [ gamma/(2(D gamma - s kbar))
                          + lambda f(s, kbar) + mu |kbar'|^2 ] ds

with the phase cost f = (D gamma - s kbar)/(8 gamma s^2) obeys the
Euler-Lagrange equation

    2 mu kbar'' = gamma s/(2 (D gamma - s kbar)^2) - lambda/(8 gamma s)

with equilibrium Dirichlet data kbar(s_{i,f}) = D gamma / s_{i,f}.  Both
boundary values sit on the equilibrium curve, so the denominator
u = D gamma - s kbar vanishes there; dominant balance gives u ~ A d^{2/3}
with d the distance to the endpoint, which makes the duration integrand an
integrable d^(-2/3) singularity.  The solver uses a graded mesh clustered as
d ~ xi^{3/2}, a damped Newton iteration on the offset
delta = kbar - D gamma/s (so u = -s delta exactly, avoiding catastrophic
cancellation in the boundary layers), and endpoint quadrature that fits the
local power law.

Weights lambda and mu are specified in normalized units where gamma = 1;
for other gamma the solver rescales mu -> mu/gamma^2, which leaves the
physical protocol invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve_banded

from .bridge import (DIFFUSION, StiffnessProfile, VarianceTrajectory,
                     controls_from_classical, kbar_dot_finite_difference)
from .core import Protocol
from .variational import TrapConfig


class ELConvergenceError(RuntimeError):
    """Newton iteration failed to converge on the Euler-Lagrange system."""

    def __init__(self, msg, residual=np.nan):
        super().__init__(msg)
        self.residual = residual


class TransitSignError(RuntimeError):
    """The interior solution lost the monotone-transit sign condition."""


class NonIntegrableEndpointError(RuntimeError):
    """Fitted endpoint exponent >= 1: the duration integral diverges."""


@dataclass(frozen=True)
class CostWeights:
    """Lagrange weights: lam multiplies the phase cost, mu the |kbar'|^2
    regularizer.  mu = 0 would make the EL equation algebraic and is
    rejected."""

    lam: float
    mu: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda weight must be >= 0")
        if self.mu <= 0:
            raise ValueError("mu weight must be > 0")


@dataclass(frozen=True)
class StrokeSpec:
    """One stroke: transfer the variance s_i -> s_f while holding one
    physical knob fixed."""

    s_i: float
    s_f: float
    weights: CostWeights
    fixed_knob: str = "kappa"
    held_value: float = 1.0
    mesh_size: int = 2049

    def __post_init__(self):
        if self.s_i <= 0 or self.s_f <= 0:
            raise ValueError("endpoint variances must be positive")
        if self.s_i == self.s_f:
            raise ValueError("s_i and s_f must differ")
        if self.fixed_knob not in ("kappa", "g"):
            raise ValueError("fixed_knob must be 'kappa' or 'g'")
        if self.mesh_size < 64:
            raise ValueError("mesh_size must be >= 64")


def phase_cost(s, kbar, gamma: float = 1.0, diffusion: float = DIFFUSION):
    """Phase-cost density: accumulated alpha^2 per unit variance."""
    s = np.asarray(s, dtype=float)
    return (diffusion * gamma - s * kbar) / (8.0 * gamma * s ** 2)


def graded_mesh(s_i: float, s_f: float, n: int) -> np.ndarray:
    """Mesh over [s_i, s_f] clustering nodes as distance^(3/2) at both ends."""
    xi = np.linspace(0.0, 1.0, n)
    p = 1.5
    w = xi ** p / (xi ** p + (1.0 - xi) ** p)
    return s_i + (s_f - s_i) * w


def _second_difference_coeffs(s):
    """Coefficients (c_minus, c_diag, c_plus) of the 3-point second
    derivative on a nonuniform mesh, for interior nodes."""
    h0 = s[1:-1] - s[:-2]
    h1 = s[2:] - s[1:-1]
    c_minus = 2.0 / (h0 * (h0 + h1))
    c_plus = 2.0 / (h1 * (h0 + h1))
    c_diag = -(c_minus + c_plus)
    return c_minus, c_diag, c_plus


def _el_residual(delta, s, mu, lam, gamma, diffusion, coeffs):
    """Residual of the discretized EL equation at interior nodes.

    delta = kbar - D gamma/s, u = -s delta.  kbar'' = delta'' + 2 D gamma/s^3
    with the equilibrium part differentiated analytically.
    """
    c_m, c_d, c_p = coeffs
    dg = diffusion * gamma
    si = s[1:-1]
    d2 = c_m * delta[:-2] + c_d * delta[1:-1] + c_p * delta[2:]
    kpp = d2 + 2.0 * dg / si ** 3
    u = -si * delta[1:-1]
    return 2.0 * mu * kpp - gamma * si / (2.0 * u ** 2) + lam / (8.0 * gamma * si)


def _newton_solve(delta0, s, mu, lam, gamma, diffusion, transit_sign,
                  tol=5e-9, max_iter=80):
    """Damped Newton on the interior unknowns; Dirichlet delta = 0 at ends.

    The line search judges progress in a norm scaled by the stiff term
    gamma*s/(2u^2); the raw max-norm is dominated by the boundary-layer
    nodes and stalls the damping far from the solution.
    """
    coeffs = _second_difference_coeffs(s)
    c_m, c_d, c_p = coeffs
    delta = delta0.copy()
    n_int = s.size - 2
    si = s[1:-1]

    def residual(d):
        return _el_residual(d, s, mu, lam, gamma, diffusion, coeffs)

    def _roundoff_floor(d):
        # evaluating the second difference loses ~eps*|delta|/h^2 per node
        mag = (np.abs(c_m * d[:-2]) + np.abs(c_d * d[1:-1])
               + np.abs(c_p * d[2:]))
        return 20.0 * np.finfo(float).eps * 2.0 * mu * np.max(mag)

    f = residual(delta)
    fnorm = np.max(np.abs(f))
    for _ in range(max_iter):
        if fnorm < max(tol, _roundoff_floor(delta)):
            return delta, fnorm
        u = -si * delta[1:-1]
        diag = 2.0 * mu * c_d - gamma * si ** 2 / u ** 3
        ab = np.zeros((3, n_int))
        ab[0, 1:] = 2.0 * mu * c_p[:-1]   # superdiagonal
        ab[1, :] = diag
        ab[2, :-1] = 2.0 * mu * c_m[1:]   # subdiagonal
        step = solve_banded((1, 1), ab, -f)

        scale = 1.0 + gamma * si / (2.0 * u ** 2)
        fscaled = np.max(np.abs(f) / scale)
        lam_damp = 1.0
        improved = False
        for _ in range(40):
            trial = delta.copy()
            trial[1:-1] += lam_damp * step
            u_trial = -si * trial[1:-1]
            if np.any(u_trial * transit_sign <= 0):
                lam_damp *= 0.5
                continue
            f_trial = residual(trial)
            if np.max(np.abs(f_trial) / scale) < fscaled:
                delta, f = trial, f_trial
                fnorm = np.max(np.abs(f))
                improved = True
                break
            lam_damp *= 0.5
        if not improved:
            break
    if fnorm < max(tol, _roundoff_floor(delta)):
        return delta, fnorm
    raise ELConvergenceError(
        f"Newton stalled with max residual {fnorm:.3e}", residual=fnorm)


def solve_euler_lagrange(spec: StrokeSpec, gamma: float = 1.0,
                         diffusion: float = DIFFUSION,
                         tol: float = 5e-9) -> StiffnessProfile:
    """Solve the singular two-point BVP for kbar(s) on a graded mesh."""
    mu = spec.weights.mu / gamma ** 2
    lam = spec.weights.lam
    dg = diffusion * gamma
    s = graded_mesh(spec.s_i, spec.s_f, spec.mesh_size)
    transit_sign = np.sign(spec.s_f - spec.s_i)

    # Offset initial guess: the equilibrium curve itself is singular.  Build
    # u from the matched boundary-layer asymptotics u ~ A d^(2/3) with
    # A = (9 gamma s_e^2 / (8 mu))^(1/3) at each endpoint.
    span = abs(spec.s_f - spec.s_i)
    a_left = (9.0 * gamma * spec.s_i ** 2 / (8.0 * mu)) ** (1.0 / 3.0)
    a_right = (9.0 * gamma * spec.s_f ** 2 / (8.0 * mu)) ** (1.0 / 3.0)
    a_bar = 0.5 * (a_left + a_right)

    def _guess(scale_amp):
        d_l = np.abs(s - spec.s_i)
        d_r = np.abs(spec.s_f - s)
        u0 = (transit_sign * scale_amp * a_bar
              * (d_l * d_r / span) ** (2.0 / 3.0))
        d0 = -u0 / s
        d0[0] = d0[-1] = 0.0
        return d0

    candidates = [1.0, 0.3, 3.0]

    # continuation ladder in mu: plain Newton first, then 10x -> target
    factors = []
    fac = 10.0
    while fac > 1.0:
        factors.append(fac)
        fac *= 0.5
    factors.append(1.0)

    delta = None
    last_err = None
    for amp in candidates:
        try:
            delta, res = _newton_solve(_guess(amp), s, mu, lam, gamma,
                                       diffusion, transit_sign, tol=tol)
            break
        except ELConvergenceError as err:
            last_err = err
        try:
            trial = _guess(amp)
            for fac in factors:
                trial, res = _newton_solve(trial, s, mu * fac, lam, gamma,
                                           diffusion, transit_sign, tol=tol)
            delta = trial
            break
        except ELConvergenceError as err:
            last_err = err
    if delta is None:
        raise last_err

    u = -s[1:-1] * delta[1:-1]
    if np.any(u * transit_sign <= 0):
        raise TransitSignError("interior solution violates the transit sign")

    kbar = delta + dg / s
    kbar[0] = dg / spec.s_i
    kbar[-1] = dg / spec.s_f
    # d kbar/ds; diverges like d^(-1/3) at the endpoints, where it is only
    # ever used multiplied by u -> 0
    kbar_prime = np.gradient(delta, s) - dg / s ** 2
    return StiffnessProfile(s, kbar, kbar_prime, domain="variance",
                            gamma=gamma)


def _cumulative_times(profile: StiffnessProfile,
                      diffusion: float = DIFFUSION) -> np.ndarray:
    """Elapsed time at every mesh node, integrating dt = gamma ds / (2u).

    The three nodes nearest each endpoint get a fitted-power-law treatment
    (the solver's boundary layers behave as u ~ d^(2/3)); the interior is
    plain trapezoid.
    """
    if profile.domain != "variance":
        raise ValueError("duration needs a variance-domain profile")
    s = profile.grid
    gamma = profile.gamma
    dg = diffusion * gamma
    n = s.size
    if n < 8:
        raise ValueError("profile mesh too coarse for duration quadrature")
    direction = np.sign(s[-1] - s[0])
    u = dg - s * profile.kbar
    u_int = u[1:-1]
    if np.any(~np.isfinite(u_int)) or np.any(u_int * direction <= 0):
        raise NonIntegrableEndpointError(
            "ds/dt vanishes or reverses in the interior; duration diverges")
    g_int = gamma / (2.0 * np.abs(u_int))    # dt per unit |ds|
    d = np.abs(s - s[0])                     # arc coordinate from s_i

    def _fit_power(dists, vals):
        # log-log least squares through three nodes: vals ~ C * dists^(-p)
        ld, lv = np.log(dists), np.log(vals)
        p = -np.polyfit(ld, lv, 1)[0]
        logc = np.mean(lv + p * ld)
        return p, np.exp(logc)

    tau = np.zeros(n)
    # left endpoint layer: interior nodes 1..3
    dl = d[1:4]
    pl, cl = _fit_power(dl, g_int[0:3])
    if pl >= 1.0:
        raise NonIntegrableEndpointError(
            f"left endpoint exponent {pl:.3f} >= 1")
    tau[1:4] = cl * dl ** (1.0 - pl) / (1.0 - pl)
    # interior trapezoid
    for j in range(4, n - 1):
        tau[j] = tau[j - 1] + 0.5 * (g_int[j - 1] + g_int[j - 2]) * (d[j] - d[j - 1])
    # right endpoint layer: interior nodes n-4..n-2, distances from s_f
    dr = d[-1] - d[-4:-1]
    pr, cr = _fit_power(dr, g_int[-3:])
    if pr >= 1.0:
        raise NonIntegrableEndpointError(
            f"right endpoint exponent {pr:.3f} >= 1")
    remaining = cr * dr ** (1.0 - pr) / (1.0 - pr)
    tau[-1] = tau[-4] + remaining[0]
    tau[-3] = tau[-1] - remaining[1]
    tau[-2] = tau[-1] - remaining[2]
    if np.any(np.diff(tau) <= 0):
        raise NonIntegrableEndpointError("elapsed time is not monotone")
    return tau


def duration(profile: StiffnessProfile, diffusion: float = DIFFUSION) -> float:
    """Total protocol duration Delta t = (gamma/2) int ds/(D gamma - kbar s)."""
    return float(_cumulative_times(profile, diffusion)[-1])


def endpoint_exponents(profile: StiffnessProfile,
                       diffusion: float = DIFFUSION):
    """Fitted boundary-layer exponents of the duration integrand (expected
    close to 2/3 for EL solutions); diagnostic helper."""
    s = profile.grid
    gamma = profile.gamma
    u = diffusion * gamma - s * profile.kbar
    g_int = gamma / (2.0 * np.abs(u[1:-1]))
    d = np.abs(s - s[0])

    def fit(dists, vals):
        return -np.polyfit(np.log(dists), np.log(vals), 1)[0]

    return fit(d[1:4], g_int[0:3]), fit(d[-1] - d[-4:-1], g_int[-3:])


def reparameterize(profile: StiffnessProfile,
                   n_time: int = 4001,
                   diffusion: float = DIFFUSION):
    """Map a variance-domain solution to the time domain.

    Returns (VarianceTrajectory, StiffnessProfile over time) on a uniform
    time grid.  kbar_dot is obtained by 4th-order finite differences of the
    resampled kbar(t), which is smooth in t even though kbar(s) has
    square-root-type boundary layers (d ~ t^3 near the endpoints).
    """
    tau = _cumulative_times(profile, diffusion)
    s_mesh = profile.grid
    gamma = profile.gamma
    dg = diffusion * gamma

    t_grid = np.linspace(0.0, tau[-1], n_time)
    s_of_t = PchipInterpolator(tau, s_mesh)(t_grid)
    kbar_of_t = PchipInterpolator(tau, profile.kbar)(t_grid)

    # exact equilibrium endpoints
    s_of_t[0], s_of_t[-1] = s_mesh[0], s_mesh[-1]
    kbar_of_t[0] = dg / s_mesh[0]
    kbar_of_t[-1] = dg / s_mesh[-1]

    kbar_dot = kbar_dot_finite_difference(t_grid, kbar_of_t)
    kbar_dot[0] = kbar_dot[-1] = 0.0

    s_dot = (2.0 / gamma) * (dg - kbar_of_t * s_of_t)
    traj = VarianceTrajectory(t_grid, s_of_t, s_dot)
    tprofile = StiffnessProfile(t_grid, kbar_of_t, kbar_dot, domain="time",
                                gamma=gamma)
    return traj, tprofile


def synthesize_stroke(spec: StrokeSpec, cfg: TrapConfig,
                      gamma: float = 1.0, n_time: int = 4001) -> Protocol:
    """Full pipeline: EL solve -> time reparameterization -> bridge."""
    profile = solve_euler_lagrange(spec, gamma=gamma)
    traj, tprofile = reparameterize(profile, n_time=n_time)
    return controls_from_classical(tprofile, traj, spec.fixed_knob,
                                   spec.held_value, cfg, gamma=gamma)
