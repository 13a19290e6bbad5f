"""Quantum-classical analogy between the BEC and an overdamped OU process.

The variance s of the OU process with classical stiffness kbar obeys

    ds/dt = (2/gamma) (D gamma - kbar s),    kbar_eq = D gamma / s_eq,

and the bridge relation converts a classical stiffness schedule into the
physical controls (kappa, g):

    kappa - N g/(4 sqrt(pi) sigma^3)
        = 1/(2 sigma^4) + kbar_dot/gamma - kbar^2/gamma^2

(normalized units hbar = m = 1, sigma^2 = s).  The physical protocol is
independent of the drag gamma, which only rescales kbar.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Protocol
from .variational import SQRT_PI, TrapConfig

DIFFUSION = 0.5  # D = hbar/(2m) in normalized units


@dataclass
class StiffnessProfile:
    """Classical stiffness kbar sampled over variance s or over time t.

    kbar_prime is the derivative with respect to the domain variable
    (d kbar/ds or d kbar/dt).
    """

    grid: np.ndarray
    kbar: np.ndarray
    kbar_prime: np.ndarray
    domain: str = "variance"  # "variance" | "time"
    gamma: float = 1.0

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.kbar = np.asarray(self.kbar, dtype=float)
        self.kbar_prime = np.asarray(self.kbar_prime, dtype=float)
        if self.domain not in ("variance", "time"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if not (self.grid.size == self.kbar.size == self.kbar_prime.size):
            raise ValueError("grid/kbar/kbar_prime lengths differ")
        if not np.all(np.isfinite(self.kbar)):
            raise ValueError("kbar samples must be finite")
        if self.domain == "variance" and np.any(np.diff(self.grid) == 0):
            raise ValueError("variance grid must be strictly monotone")


@dataclass
class VarianceTrajectory:
    """Variance s(t) of the classical process and its rate."""

    times: np.ndarray
    s_vals: np.ndarray
    s_dot: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.s_vals = np.asarray(self.s_vals, dtype=float)
        self.s_dot = np.asarray(self.s_dot, dtype=float)
        if np.any(self.s_vals <= 0):
            raise ValueError("variance must stay positive")


class VarianceCollapseError(RuntimeError):
    def __init__(self, time: float):
        super().__init__(f"variance reached <= 0 at t = {time:.6g}")
        self.time = time


def variance_evolve(kbar_of_t: Callable[[float], float],
                    s0: float,
                    t_grid: np.ndarray,
                    gamma: float = 1.0,
                    diffusion: float = DIFFUSION,
                    max_dt: float | None = None) -> VarianceTrajectory:
    """RK4 solution of ds/dt = (2/gamma)(D gamma - kbar(t) s)."""
    if s0 <= 0:
        raise ValueError("s0 must be positive")
    t_grid = np.asarray(t_grid, dtype=float)
    dg = diffusion * gamma
    if max_dt is None:
        max_dt = min(np.min(np.diff(t_grid)), 0.05 * gamma)

    def rhs(t, s):
        return (2.0 / gamma) * (dg - float(kbar_of_t(t)) * s)

    s_vals = np.empty_like(t_grid)
    s = float(s0)
    s_vals[0] = s
    for i in range(t_grid.size - 1):
        t0, t1 = t_grid[i], t_grid[i + 1]
        nsub = max(1, int(np.ceil((t1 - t0) / max_dt)))
        h = (t1 - t0) / nsub
        t = t0
        for _ in range(nsub):
            k1 = rhs(t, s)
            k2 = rhs(t + 0.5 * h, s + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, s + 0.5 * h * k2)
            k4 = rhs(t + h, s + h * k3)
            s = s + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            t += h
            if s <= 0:
                raise VarianceCollapseError(t)
        s_vals[i + 1] = s

    kbar_vals = np.array([float(kbar_of_t(t)) for t in t_grid])
    s_dot = (2.0 / gamma) * (dg - kbar_vals * s_vals)
    return VarianceTrajectory(t_grid, s_vals, s_dot)


def smoothed_step(kbar_i: float, kbar_f: float,
                  t_switch: float, rise_time: float):
    """Infinitely smooth tanh step between two stiffness levels."""
    if rise_time <= 0:
        raise ValueError("rise_time must be positive")

    def kbar(t):
        return kbar_i + (kbar_f - kbar_i) * 0.5 * (
            1.0 + np.tanh((t - t_switch) / rise_time))

    return kbar


def kbar_dot_finite_difference(times: np.ndarray, kbar: np.ndarray) -> np.ndarray:
    """4th-order centered finite-difference time derivative on a uniform grid.

    Used when only time samples of kbar exist; profiles coming from the
    variance-domain solver carry the exact chain-rule derivative instead.
    """
    times = np.asarray(times, dtype=float)
    kbar = np.asarray(kbar, dtype=float)
    h = np.diff(times)
    if not np.allclose(h, h[0], rtol=1e-8):
        raise ValueError("finite-difference derivative needs a uniform grid")
    h = h[0]
    d = np.empty_like(kbar)
    n = kbar.size
    if n < 5:
        return np.gradient(kbar, times)
    d[2:-2] = (kbar[:-4] - 8 * kbar[1:-3] + 8 * kbar[3:-1] - kbar[4:]) / (12 * h)
    # one-sided 4th-order stencils at the edges
    c = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12 * h)
    d[0] = c @ kbar[:5]
    d[1] = c @ kbar[1:6]
    d[-1] = -(c @ kbar[-1:-6:-1])
    d[-2] = -(c @ kbar[-2:-7:-1])
    return d


def controls_from_classical(profile: StiffnessProfile,
                            traj: VarianceTrajectory,
                            fixed: str,
                            held_value: float,
                            cfg: TrapConfig,
                            gamma: float = 1.0) -> Protocol:
    """Solve the bridge relation pointwise for the free control knob.

    `fixed` names the knob that is held constant at `held_value`; the other
    one is derived from the classical schedule.  `profile` must be over time
    and share the trajectory's grid.
    """
    if fixed not in ("kappa", "g"):
        raise ValueError("fixed must be 'kappa' or 'g'")
    if profile.domain != "time":
        raise ValueError("controls_from_classical needs a time-domain profile")
    if profile.grid.size != traj.times.size or not np.allclose(
            profile.grid, traj.times, rtol=1e-12, atol=1e-12):
        raise ValueError("profile and trajectory grids differ")

    s = traj.s_vals
    sigma = np.sqrt(s)
    kbar = profile.kbar
    kbar_dot = profile.kbar_prime
    n_atoms = cfg.atom_count

    # right-hand side of the bridge relation
    rhs = 0.5 / s ** 2 + kbar_dot / gamma - (kbar / gamma) ** 2
    inter = 4.0 * SQRT_PI * sigma ** 3

    trap_inverted = False
    if fixed == "kappa":
        kappa = np.full_like(s, held_value)
        g = (held_value - rhs) * inter / n_atoms
    else:
        g = np.full_like(s, held_value)
        kappa = rhs + n_atoms * held_value / inter
        if np.any(kappa <= 0):
            trap_inverted = True
            warnings.warn("derived kappa(t) is non-positive somewhere "
                          "(trap inversion)", RuntimeWarning, stacklevel=2)

    return Protocol(traj.times, kappa, g, s, atom_count=n_atoms,
                    trap_inverted=trap_inverted)


def check_stationarity(protocol: Protocol, index: int) -> float:
    """Residual of the steady-state width polynomial at a protocol endpoint.

    Zero when the endpoint (kappa, g, s_pred) triple is an equilibrium of the
    Ermakov dynamics.
    """
    sigma = np.sqrt(protocol.s_pred[index])
    ng = protocol.atom_count * protocol.g[index]
    return float(protocol.kappa[index] * sigma ** 4 - 0.25
                 - ng * sigma / (4.0 * SQRT_PI))
