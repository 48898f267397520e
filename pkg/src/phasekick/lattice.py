"""Recoil units, momentum/position lattices, and laser pulse descriptions.

Everything downstream works in recoil units: hbar = 1, k = 1, m = 1/2, so the
recoil frequency hbar*k^2/(2m) is exactly 1. Times are in 1/w_rec, momenta in
hbar*k, positions in 1/k.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

__all__ = [
    "RecoilUnits",
    "MomentumGrid",
    "PositionGrid",
    "LaserPulse",
    "PulseSequence",
    "make_momentum_grid",
    "position_grid_for",
    "shift_index",
    "pi_pulse_duration",
]


@dataclass(frozen=True)
class RecoilUnits:
    hbar: float = 1.0
    k: float = 1.0
    mass: float = 0.5

    @property
    def omega_rec(self):
        return self.hbar * self.k**2 / (2.0 * self.mass)

    @property
    def recoil_momentum(self):
        return self.hbar * self.k


UNITS = RecoilUnits()
HBAR = UNITS.hbar
PLANCK_H = 2.0 * np.pi * HBAR


@dataclass(frozen=True)
class MomentumGrid:
    """Uniform momentum lattice covering [-extent, +extent] recoils.

    subdivision points per hbar*k, so a photon kick is an exact index shift of
    `subdivision`; subdivision must be even so half-recoil offsets (used by the
    Wigner transform) are also exact lattice reads.
    """

    subdivision: int
    extent_recoils: int

    @property
    def n_points(self):
        return 2 * self.extent_recoils * self.subdivision + 1

    @property
    def dp(self):
        return HBAR * UNITS.k / self.subdivision

    @property
    def center_index(self):
        return self.extent_recoils * self.subdivision

    @property
    def points(self):
        # canonical construction: (i - center) * dp, exact integer offsets
        return (np.arange(self.n_points) - self.center_index) * self.dp


def make_momentum_grid(subdivision=10, extent_recoils=8):
    if subdivision < 2 or subdivision % 2 != 0:
        raise InvalidParameterError(
            f"subdivision must be a positive even integer, got {subdivision}"
        )
    if extent_recoils < 1:
        raise InvalidParameterError(
            f"extent_recoils must be >= 1, got {extent_recoils}"
        )
    return MomentumGrid(int(subdivision), int(extent_recoils))


@dataclass(frozen=True)
class PositionGrid:
    """Fourier-conjugate position lattice: dr * dp * n = 2*pi*hbar exactly."""

    n_points: int
    dr: float

    @property
    def center_index(self):
        return (self.n_points - 1) // 2

    @property
    def points(self):
        return (np.arange(self.n_points) - self.center_index) * self.dr

    @property
    def length(self):
        return self.n_points * self.dr


def position_grid_for(grid: MomentumGrid) -> PositionGrid:
    n = grid.n_points
    return PositionGrid(n, PLANCK_H / (n * grid.dp))


def shift_index(grid: MomentumGrid, idx: int, n_kicks: int):
    """Index of p_idx + n_kicks*hbar*k, or None if it leaves the lattice."""
    if idx < 0 or idx >= grid.n_points:
        raise InvalidParameterError(f"index {idx} not on grid")
    out = idx + n_kicks * grid.subdivision
    if out < 0 or out >= grid.n_points:
        return None
    return out


@dataclass(frozen=True)
class LaserPulse:
    """Rectangular plane-wave pulse. k_L = direction * k (direction is +-1)."""

    direction: int
    rabi: float
    detuning: float
    phase: float = 0.0
    t_start: float = 0.0
    t_stop: float = 0.0

    def __post_init__(self):
        if self.direction not in (+1, -1):
            raise InvalidParameterError(f"direction must be +-1, got {self.direction}")
        if self.rabi < 0:
            raise InvalidParameterError(f"rabi must be >= 0, got {self.rabi}")
        if not self.t_stop > self.t_start:
            raise InvalidParameterError(
                f"t_stop ({self.t_stop}) must exceed t_start ({self.t_start})"
            )

    @property
    def duration(self):
        return self.t_stop - self.t_start

    def active(self, t):
        # half-open: a pulse edge belongs to the segment it opens
        return self.t_start <= t < self.t_stop


@dataclass(frozen=True)
class PulseSequence:
    pulses: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))

    def __len__(self):
        return len(self.pulses)

    def __iter__(self):
        return iter(self.pulses)

    @property
    def t_end(self):
        return max((p.t_stop for p in self.pulses), default=0.0)

    def edges(self):
        """Sorted unique pulse start/stop times."""
        ts = {p.t_start for p in self.pulses} | {p.t_stop for p in self.pulses}
        return sorted(ts)

    def active_at(self, t):
        return tuple(p for p in self.pulses if p.active(t))


def pi_pulse_duration(rabi, detuning_eff=0.0):
    """Time for one half generalized-Rabi cycle, pi/sqrt(rabi^2 + delta^2)."""
    if rabi <= 0:
        raise InvalidParameterError(f"rabi must be > 0, got {rabi}")
    return np.pi / np.hypot(rabi, detuning_eff)


def segment_plan(pulses, t0, t_end, marks=()):
    """Split [t0, t_end] at pulse edges and marks.

    Returns (a, b, active_pulses) triples; the active set is constant inside
    each segment, so fixed-step integrators can align steps with every edge.
    """
    cuts = {float(t0), float(t_end)}
    for e in pulses.edges():
        if t0 < e < t_end:
            cuts.add(float(e))
    for m in marks:
        if t0 < m < t_end:
            cuts.add(float(m))
    cuts = sorted(cuts)
    return [
        (a, b, pulses.active_at(0.5 * (a + b)))
        for a, b in zip(cuts[:-1], cuts[1:])
    ]
