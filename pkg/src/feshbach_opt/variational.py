"""Gaussian-ansatz reduction of the 1D GPE.

The condensate width sigma obeys a modified Ermakov equation

    sigma'' + kappa*sigma = 1/(4 sigma^3) + N g /(4 sqrt(pi) sigma^2)

(normalized units hbar = m = 1).  This module provides equilibrium widths,
time evolution of sigma and the ansatz energy used for cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .core import GaussianState

SQRT_PI = np.sqrt(np.pi)


class NoEquilibriumError(ValueError):
    """The steady-state width polynomial has no positive root."""


class WidthCollapseError(RuntimeError):
    """sigma reached zero or below during integration."""

    def __init__(self, time: float):
        super().__init__(f"sigma collapsed to <= 0 at t = {time:.6g}")
        self.time = time


@dataclass(frozen=True)
class TrapConfig:
    """Trap stiffness kappa, coupling g and atom number N (normalized units).

    g may be negative (attractive interactions); equilibrium existence is then
    checked explicitly.
    """

    kappa: float
    g: float = 0.0
    atom_count: int = 1

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.atom_count < 1:
            raise ValueError("atom_count must be >= 1")

    @property
    def ng(self) -> float:
        return self.atom_count * self.g


def _steady_poly(sigma, kappa, ng):
    # kappa*sigma^4 - 1/4 - N g sigma/(4 sqrt(pi)); root is the equilibrium width
    return kappa * sigma ** 4 - 0.25 - ng * sigma / (4.0 * SQRT_PI)


def equilibrium_width(cfg: TrapConfig) -> float:
    """Unique positive root of the steady-state polynomial, rel. tol 1e-12."""
    ng = cfg.ng
    lo = 1e-6
    hi = max(10.0, 10.0 * (abs(ng) / (4.0 * SQRT_PI * cfg.kappa)) ** (1.0 / 3.0))
    if ng < 0:
        # attractive: the polynomial may stay negative; bracket must be checked
        sigmas = np.linspace(lo, hi, 4096)
        vals = _steady_poly(sigmas, cfg.kappa, ng)
        pos = np.nonzero(vals > 0)[0]
        if pos.size == 0:
            raise NoEquilibriumError(
                f"no positive equilibrium width for kappa={cfg.kappa}, Ng={ng}")
        hi = sigmas[pos[0]]
    if _steady_poly(lo, cfg.kappa, ng) > 0:
        lo = 1e-12
    root = brentq(_steady_poly, lo, hi, args=(cfg.kappa, ng),
                  xtol=1e-15, rtol=1e-14)
    return float(root)


def _ermakov_acc(sigma, kappa, ng):
    return (-kappa * sigma + 0.25 / sigma ** 3
            + ng / (4.0 * SQRT_PI * sigma ** 2))


def ermakov_evolve(initial: GaussianState,
                   kappa_of_t: Callable[[float], float],
                   g_of_t: Callable[[float], float],
                   t_grid: np.ndarray,
                   atom_count: int = 1,
                   max_dt: float | None = None):
    """Integrate the modified Ermakov equation with classical RK4.

    Returns (sigma, sigma_dot) sampled on t_grid.  The internal step is
    min(grid step, T_trap/200) unless max_dt overrides it; each grid interval
    is sub-stepped so that samples land exactly on the grid.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2:
        raise ValueError("t_grid must have at least two points")
    n = atom_count
    if max_dt is None:
        t_trap = 2.0 * np.pi / np.sqrt(float(kappa_of_t(t_grid[0])))
        max_dt = t_trap / 200.0

    sig = np.empty_like(t_grid)
    sig_dot = np.empty_like(t_grid)
    s, v = initial.sigma, initial.sigma_dot
    sig[0], sig_dot[0] = s, v

    for i in range(t_grid.size - 1):
        t0, t1 = t_grid[i], t_grid[i + 1]
        nsub = max(1, int(np.ceil((t1 - t0) / max_dt)))
        h = (t1 - t0) / nsub
        t = t0
        for _ in range(nsub):
            k_a = float(kappa_of_t(t))
            k_m = float(kappa_of_t(t + 0.5 * h))
            k_b = float(kappa_of_t(t + h))
            ng_a = n * float(g_of_t(t))
            ng_m = n * float(g_of_t(t + 0.5 * h))
            ng_b = n * float(g_of_t(t + h))

            a1 = _ermakov_acc(s, k_a, ng_a)
            s2 = s + 0.5 * h * v
            v2 = v + 0.5 * h * a1
            if s2 <= 0:
                raise WidthCollapseError(t)
            a2 = _ermakov_acc(s2, k_m, ng_m)
            s3 = s + 0.5 * h * v2
            v3 = v + 0.5 * h * a2
            if s3 <= 0:
                raise WidthCollapseError(t)
            a3 = _ermakov_acc(s3, k_m, ng_m)
            s4 = s + h * v3
            v4 = v + h * a3
            if s4 <= 0:
                raise WidthCollapseError(t)
            a4 = _ermakov_acc(s4, k_b, ng_b)

            s = s + h * (v + 2.0 * v2 + 2.0 * v3 + v4) / 6.0
            v = v + h * (a1 + 2.0 * a2 + 2.0 * a3 + a4) / 6.0
            t += h
            if s <= 0:
                raise WidthCollapseError(t)
        sig[i + 1], sig_dot[i + 1] = s, v

    return sig, sig_dot


def ansatz_energy(state: GaussianState, cfg: TrapConfig) -> float:
    """Energy of the Gaussian ansatz (per particle, normalized units)."""
    s = state.sigma
    return (0.5 * state.sigma_dot ** 2
            + 1.0 / (8.0 * s ** 2)
            + 0.5 * cfg.kappa * s ** 2
            + cfg.ng / (4.0 * SQRT_PI * s))
