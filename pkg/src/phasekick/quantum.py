"""Exact density-matrix evolution of a two-level atom on the momentum lattice.

The state is stored as four N x N blocks rho_ij (i,j in {g,e} = {1,2}) in the
interaction picture, where free kinetic and internal phases are absorbed and
only the laser coupling drives the dynamics. Row index is the bra momentum p',
column index the ket momentum p. Absorption from beam L shifts the ket by
+hbar*k_L, which on the lattice is an exact index shift of direction*subdivision;
off-lattice shifts contribute zero (never wraparound: wraparound would alias
momentum families).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundaryError,
    InvalidParameterError,
    IntegrationDivergedError,
    WrongPictureError,
)
from .lattice import HBAR, MomentumGrid, PulseSequence, segment_plan

__all__ = [
    "DensityMatrix",
    "GaussianStateSpec",
    "thermal_diagonal_state",
    "gaussian_mixed_state",
    "coupling_rhs",
    "propagate",
    "to_schrodinger",
    "to_interaction",
    "partial_trace_internal",
    "momentum_populations",
    "full_matrix",
    "purity",
]

EDGE_TOL = 1e-6
TRACE_TOL = 1e-10
HERM_TOL = 1e-12


@dataclass
class DensityMatrix:
    grid: MomentumGrid
    blocks: np.ndarray  # shape (2, 2, N, N), complex
    time: float = 0.0
    picture: str = "interaction"

    def copy(self):
        return DensityMatrix(self.grid, self.blocks.copy(), self.time, self.picture)

    def trace(self):
        return float(
            np.trace(self.blocks[0, 0]).real + np.trace(self.blocks[1, 1]).real
        )

    def hermiticity_defect(self):
        d = 0.0
        for i in range(2):
            for j in range(2):
                d = max(
                    d,
                    float(
                        np.abs(self.blocks[i, j] - self.blocks[j, i].conj().T).max()
                    ),
                )
        return d

    def edge_population(self):
        """Total population on the outermost lattice points."""
        diag_g = self.blocks[0, 0].diagonal().real
        diag_e = self.blocks[1, 1].diagonal().real
        return float(diag_g[0] + diag_g[-1] + diag_e[0] + diag_e[-1])


@dataclass(frozen=True)
class GaussianStateSpec:
    """sigma_r = inf marks full spatial delocalization."""

    sigma_r: float
    sigma_p: float
    mean_r: float = 0.0
    mean_p: float = 0.0


def _empty_blocks(grid):
    n = grid.n_points
    return np.zeros((2, 2, n, n), dtype=np.complex128)


def _check_edge(state_or_diag, where="state construction"):
    if isinstance(state_or_diag, DensityMatrix):
        edge = state_or_diag.edge_population()
    else:
        edge = float(state_or_diag[0] + state_or_diag[-1])
    if edge > EDGE_TOL:
        raise BoundaryError(
            f"edge population {edge:.3e} exceeds {EDGE_TOL:.0e} at {where}; "
            "enlarge the grid extent"
        )


def thermal_diagonal_state(grid, sigma_p):
    """Diagonal Gaussian momentum distribution, all population in |g>."""
    if sigma_p <= 0:
        raise InvalidParameterError(f"sigma_p must be > 0, got {sigma_p}")
    p = grid.points
    w = np.exp(-(p**2) / (2.0 * sigma_p**2))
    w /= w.sum()
    _check_edge(w, "thermal_diagonal_state")
    blocks = _empty_blocks(grid)
    blocks[0, 0][np.diag_indices(grid.n_points)] = w
    return DensityMatrix(grid, blocks, time=0.0, picture="interaction")


def gaussian_mixed_state(grid, spec):
    """Gaussian phase-space state in |g>, Wigner widths (sigma_r, sigma_p).

    Momentum-basis kernel: rho(p',p) proportional to
    exp(-((p+p')/2 - p0)^2 / (2 sigma_p^2)) * exp(-sigma_r^2 (p'-p)^2 / (2 hbar^2)),
    with a plane-wave factor for a nonzero mean position. Purity is
    hbar/(2 sigma_r sigma_p); equality sigma_r*sigma_p = hbar/2 is a pure
    coherent state.
    """
    if not math.isfinite(spec.sigma_r):
        return thermal_diagonal_state(grid, spec.sigma_p)
    if spec.sigma_r <= 0 or spec.sigma_p <= 0:
        raise InvalidParameterError("widths must be positive")
    if spec.sigma_r * spec.sigma_p < HBAR / 2 - 1e-12:
        raise InvalidParameterError(
            f"sigma_r*sigma_p = {spec.sigma_r * spec.sigma_p:.4g} below hbar/2: "
            "not a positive state"
        )
    p = grid.points
    mid = 0.5 * (p[:, None] + p[None, :]) - spec.mean_p
    off = p[:, None] - p[None, :]
    kernel = np.exp(
        -(mid**2) / (2.0 * spec.sigma_p**2)
        - (spec.sigma_r**2) * off**2 / (2.0 * HBAR**2)
    ) * np.exp(-1j * spec.mean_r * off / HBAR)
    kernel /= np.trace(kernel).real
    blocks = _empty_blocks(grid)
    blocks[0, 0] = kernel
    state = DensityMatrix(grid, blocks, time=0.0, picture="interaction")
    _check_edge(state, "gaussian_mixed_state")
    return state


# --- coupling right-hand side -------------------------------------------------

def _pulse_tables(grid, pulses):
    """Per-pulse constants for the rhs: (index shift, complex Rabi, detunings)."""
    p = grid.points
    tables = []
    for pl in pulses:
        n_shift = pl.direction * grid.subdivision
        omega = pl.rabi * np.exp(-1j * pl.phase)
        # delta_L^{p +-} = delta0 - (k_L/m)(p +- hbar k_L/2) = delta0 - 2 d p -+ 1
        delta_plus = pl.detuning - 2.0 * pl.direction * p - 1.0
        delta_minus = pl.detuning - 2.0 * pl.direction * p + 1.0
        tables.append((n_shift, omega, delta_plus, delta_minus))
    return tables


def _add_row_shifted(out, vec, m, n):
    # out[r, :] += vec[r] * m[r + n, :], zero fill off-lattice
    nn = out.shape[0]
    if n >= 0:
        out[: nn - n] += vec[: nn - n, None] * m[n:]
    else:
        out[-n:] += vec[-n:, None] * m[: nn + n]


def _add_col_shifted(out, vec, m, n):
    # out[:, c] += vec[c] * m[:, c + n], zero fill off-lattice
    nn = out.shape[1]
    if n >= 0:
        out[:, : nn - n] += vec[None, : nn - n] * m[:, n:]
    else:
        out[:, -n:] += vec[None, -n:] * m[:, : nn + n]


def _rhs(blocks, t, tables, out):
    out.fill(0.0)
    r11, r12, r21, r22 = blocks[0, 0], blocks[0, 1], blocks[1, 0], blocks[1, 1]
    d11, d12, d21, d22 = out[0, 0], out[0, 1], out[1, 0], out[1, 1]
    for n, omega, delta_plus, delta_minus in tables:
        u_p = np.exp(1j * t * delta_plus)
        u_m = np.exp(1j * t * delta_minus)
        # -(1/2i) = +i/2 folded into the phase vectors
        a = (0.5j * np.conj(omega)) * u_p
        b = (-0.5j * omega) * np.conj(u_p)
        c = (0.5j * omega) * np.conj(u_m)
        e = (-0.5j * np.conj(omega)) * u_m
        _add_row_shifted(d11, a, r21, n)
        _add_col_shifted(d11, b, r12, n)
        _add_row_shifted(d12, a, r22, n)
        _add_col_shifted(d12, e, r11, -n)
        _add_row_shifted(d21, c, r11, -n)
        _add_col_shifted(d21, b, r22, n)
        _add_row_shifted(d22, c, r12, -n)
        _add_col_shifted(d22, e, r21, -n)
    return out


def coupling_rhs(state, t, pulses):
    """d(blocks)/dt from the active pulses; interaction picture only."""
    if state.picture != "interaction":
        raise WrongPictureError("coupling_rhs needs an interaction-picture state")
    active = pulses.active_at(t) if isinstance(pulses, PulseSequence) else tuple(
        p for p in pulses if p.active(t)
    )
    out = np.zeros_like(state.blocks)
    return _rhs(state.blocks, t, _pulse_tables(state.grid, active), out)


# --- propagation ----------------------------------------------------------------

def _rk4_segment(blocks, grid, active, a, b, dt, scratch):
    tables = _pulse_tables(grid, active)
    if not tables:
        return  # interaction picture: free evolution is the identity
    n_steps = max(1, math.ceil((b - a) / dt - 1e-12))
    h = (b - a) / n_steps
    k1, k2, k3, k4, yt = scratch
    t = a
    for _ in range(n_steps):
        _rhs(blocks, t, tables, k1)
        np.multiply(k1, 0.5 * h, out=yt)
        yt += blocks
        _rhs(yt, t + 0.5 * h, tables, k2)
        np.multiply(k2, 0.5 * h, out=yt)
        yt += blocks
        _rhs(yt, t + 0.5 * h, tables, k3)
        np.multiply(k3, h, out=yt)
        yt += blocks
        _rhs(yt, t + h, tables, k4)
        k2 += k3
        np.multiply(k2, 2.0, out=k2)
        k1 += k4
        k1 += k2
        np.multiply(k1, h / 6.0, out=k1)
        blocks += k1
        t += h


def _check_invariants(state, t):
    tr = state.trace()
    if not math.isfinite(tr):
        raise IntegrationDivergedError("finiteness", t, tr)
    if abs(tr - 1.0) > TRACE_TOL:
        raise IntegrationDivergedError("unit-trace", t, abs(tr - 1.0))
    herm = state.hermiticity_defect()
    if herm > HERM_TOL:
        raise IntegrationDivergedError("hermiticity", t, herm)
    edge = state.edge_population()
    if edge > EDGE_TOL:
        raise BoundaryError(
            f"edge population {edge:.3e} exceeds {EDGE_TOL:.0e} at t={t:.6g}"
        )


def propagate(state, pulses, dt=1e-3, sample_times=(), observer=None,
              keep_snapshots=True):
    """Fixed-step RK4 integration of the coupling equations.

    Pulse edges and sample times are folded into the step plan, so snapshots
    land exactly on their requested times. Returns deep copies at
    sample_times (ascending); `observer(state)` is called with each snapshot
    as it is produced.
    """
    if state.picture != "interaction":
        raise WrongPictureError("propagate needs an interaction-picture state")
    if dt <= 0:
        raise InvalidParameterError(f"dt must be > 0, got {dt}")
    sample_times = [float(s) for s in sample_times]
    if any(s1 >= s2 for s1, s2 in zip(sample_times, sample_times[1:])):
        raise InvalidParameterError("sample_times must be strictly ascending")
    if sample_times and sample_times[0] < state.time - 1e-12:
        raise InvalidParameterError("sample_times start before the state's time")
    if not isinstance(pulses, PulseSequence):
        pulses = PulseSequence(tuple(pulses))
    t_end = max([pulses.t_end, state.time] + sample_times[-1:])

    snapshots = []
    remaining = list(sample_times)

    def emit(s):
        snap = s.copy()
        if observer is not None:
            observer(snap)
        if keep_snapshots:
            snapshots.append(snap)

    while remaining and abs(remaining[0] - state.time) <= 1e-12:
        emit(state)
        remaining.pop(0)

    if t_end > state.time:
        scratch = tuple(np.zeros_like(state.blocks) for _ in range(5))
        for a, b, active in segment_plan(pulses, state.time, t_end, remaining):
            _rk4_segment(state.blocks, state.grid, active, a, b, dt, scratch)
            state.time = b
            _check_invariants(state, b)
            while remaining and abs(remaining[0] - b) <= 1e-12:
                emit(state)
                remaining.pop(0)
    return snapshots


# --- picture changes and reductions ----------------------------------------------

def _kinetic_phase(grid, t):
    # rho_I = exp(+i (p'^2 - p^2) t / 2 m hbar) * rho_S; recoil units: 2m hbar = 1
    psq = grid.points**2
    return np.exp(-1j * t * (psq[:, None] - psq[None, :]))


def to_schrodinger(state):
    """Undo the interaction-picture phases at the stored time.

    The internal splitting enters only through the pulse detunings, so the
    picture change is purely kinetic (the E2-E1 phase is a global reference
    that cancels in every reported observable).
    """
    if state.picture != "interaction":
        raise WrongPictureError("state is already in the schrodinger picture")
    ph = _kinetic_phase(state.grid, state.time)
    return DensityMatrix(
        state.grid, state.blocks * ph[None, None, :, :], state.time, "schrodinger"
    )


def to_interaction(state):
    if state.picture != "schrodinger":
        raise WrongPictureError("state is already in the interaction picture")
    ph = np.conj(_kinetic_phase(state.grid, state.time))
    return DensityMatrix(
        state.grid, state.blocks * ph[None, None, :, :], state.time, "interaction"
    )


def partial_trace_internal(state):
    """rho_A = rho_gg + rho_ee as a plain N x N array (picture carried over)."""
    return state.blocks[0, 0] + state.blocks[1, 1]


def momentum_populations(state, which="total"):
    diag_g = state.blocks[0, 0].diagonal().real
    diag_e = state.blocks[1, 1].diagonal().real
    if which == "g":
        return diag_g.copy()
    if which == "e":
        return diag_e.copy()
    if which == "total":
        return diag_g + diag_e
    raise InvalidParameterError(f"which must be g, e or total, got {which!r}")


def full_matrix(state):
    """Assemble the 2N x 2N matrix in the (g-block, e-block) ordering."""
    return np.block(
        [[state.blocks[0, 0], state.blocks[0, 1]],
         [state.blocks[1, 0], state.blocks[1, 1]]]
    )


def purity(state):
    # Tr(rho^2) = sum_ij ||rho_ij||_F^2 for Hermitian rho
    return float(np.sum(np.abs(state.blocks) ** 2))
