"""Unit system, normalization and shared value types.

All internal computation is done in normalized harmonic-oscillator units
hbar = m = omega0 = 1 with drag gamma = m*omega0, so the quantum diffusion
coefficient is D = 1/2 and D*gamma = 1/2.  SI conversion happens only at the
I/O boundaries through :class:`NormalizedUnits`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

HBAR_SI = 1.054571817e-34  # J s

# Default experimental anchor: 7Li atoms in a trap with omega0/2pi = 17.5 Hz.
LI7_MASS_KG = 1.17e-26
DEFAULT_REF_FREQUENCY = 2.0 * np.pi * 17.5  # rad/s

QUECTOWATT = 1e-30  # W


class UnitError(ValueError):
    """Unknown quantity kind or inconsistent unit request."""


class QuantityKind(enum.Enum):
    """Closed enumeration of convertible quantity kinds."""

    LENGTH = "length"
    TIME = "time"
    VARIANCE = "variance"
    STIFFNESS = "stiffness"
    COUPLING = "coupling"
    ENERGY = "energy"
    POWER = "power"
    FREQUENCY = "frequency"


@dataclass(frozen=True)
class PhysicalParams:
    """Physical anchor of the unit system.

    The diffusion coefficient D = hbar/(2 m) is always recomputed from
    (hbar, mass), never stored independently.
    """

    mass: float = LI7_MASS_KG            # kg
    hbar: float = HBAR_SI                # J s
    gamma: float = 0.0                   # kg/s, 0 means "use m*omega0"
    atom_count: int = 2000
    ref_frequency: float = DEFAULT_REF_FREQUENCY  # rad/s

    def __post_init__(self):
        if self.mass <= 0 or self.hbar <= 0 or self.ref_frequency <= 0:
            raise ValueError("mass, hbar and ref_frequency must be positive")
        if self.atom_count < 1:
            raise ValueError("atom_count must be >= 1")
        if self.gamma == 0.0:
            # Convention: gamma = m*omega0. Any value cancels out of the
            # physical controls (gamma-invariance, tested in bridge).
            object.__setattr__(self, "gamma", self.mass * self.ref_frequency)
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @property
    def diffusion(self) -> float:
        """Quantum diffusion coefficient D = hbar/(2m), m^2/s."""
        return self.hbar / (2.0 * self.mass)


@dataclass(frozen=True)
class NormalizedUnits:
    """SI value of one normalized unit for each quantity kind."""

    length_unit: float     # m, L_ho = sqrt(hbar/(m omega0))
    time_unit: float       # s, 1/omega0
    energy_unit: float     # J, hbar omega0
    stiffness_unit: float  # kg/s^2, m omega0^2
    coupling_unit: float   # J m, hbar omega0 L_ho
    power_unit: float      # W, hbar omega0^2

    @classmethod
    def from_params(cls, params: PhysicalParams) -> "NormalizedUnits":
        w0 = params.ref_frequency
        l_ho = np.sqrt(params.hbar / (params.mass * w0))
        return cls(
            length_unit=l_ho,
            time_unit=1.0 / w0,
            energy_unit=params.hbar * w0,
            stiffness_unit=params.mass * w0 ** 2,
            coupling_unit=params.hbar * w0 * l_ho,
            power_unit=params.hbar * w0 ** 2,
        )

    def unit_for(self, kind: QuantityKind) -> float:
        try:
            kind = QuantityKind(kind)
        except ValueError as exc:
            raise UnitError(f"unknown quantity kind: {kind!r}") from exc
        table = {
            QuantityKind.LENGTH: self.length_unit,
            QuantityKind.TIME: self.time_unit,
            QuantityKind.VARIANCE: self.length_unit ** 2,
            QuantityKind.STIFFNESS: self.stiffness_unit,
            QuantityKind.COUPLING: self.coupling_unit,
            QuantityKind.ENERGY: self.energy_unit,
            QuantityKind.POWER: self.power_unit,
            QuantityKind.FREQUENCY: 1.0 / self.time_unit,
        }
        return table[kind]


def to_normalized(value, kind, units: NormalizedUnits):
    """Convert an SI quantity to normalized units."""
    return value / units.unit_for(kind)


def to_si(value, kind, units: NormalizedUnits):
    """Convert a normalized quantity back to SI."""
    return value * units.unit_for(kind)


def power_in_qw(power_si: float) -> float:
    """Express a power in quectowatts (1 qW = 1e-30 W)."""
    if not np.isfinite(power_si):
        raise ValueError("power must be finite")
    return power_si / QUECTOWATT


@dataclass(frozen=True)
class GaussianState:
    """Variational Gaussian state: width sigma and its rate sigma_dot.

    In normalized units the phase curvature is alpha = sigma_dot/(2 sigma).
    """

    sigma: float
    sigma_dot: float = 0.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def alpha(self) -> float:
        return 0.5 * self.sigma_dot / self.sigma


@dataclass
class Protocol:
    """Sampled physical control protocol kappa(t), g(t) with predicted
    variance s_pred(t).  All arrays share one strictly increasing time grid.
    """

    times: np.ndarray
    kappa: np.ndarray
    g: np.ndarray
    s_pred: np.ndarray
    atom_count: int = 1
    # set by bridge.controls_from_classical when the derived kappa dips <= 0
    trap_inverted: bool = field(default=False, compare=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.kappa = np.asarray(self.kappa, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        self.s_pred = np.asarray(self.s_pred, dtype=float)
        n = self.times.size
        if n < 2:
            raise ValueError("a protocol needs at least 2 samples")
        for name in ("kappa", "g", "s_pred"):
            if getattr(self, name).size != n:
                raise ValueError(f"{name} length does not match times")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.s_pred <= 0):
            raise ValueError("s_pred must be positive everywhere")

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def has_negative_g(self) -> bool:
        return bool(np.any(self.g < 0))

    def kappa_at(self, t):
        return np.interp(t, self.times, self.kappa)

    def g_at(self, t):
        return np.interp(t, self.times, self.g)

    def s_at(self, t):
        return np.interp(t, self.times, self.s_pred)

    def shifted(self, t0: float) -> "Protocol":
        """Copy of the protocol with the time origin moved to t0."""
        return Protocol(self.times - self.times[0] + t0, self.kappa.copy(),
                        self.g.copy(), self.s_pred.copy(),
                        atom_count=self.atom_count,
                        trap_inverted=self.trap_inverted)
