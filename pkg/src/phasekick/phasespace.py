"""Discrete Wigner transform, Gaussian coarse-graining, Husimi distribution.

The Wigner transform reads matrix elements <pbar - u/2| rho |pbar + u/2>, so
its natural output momentum axis is the half-step lattice (spacing dp/2,
2N - 1 points). Along each antidiagonal of a block the offset u advances by
2*dp, which fixes the discretization prefactor to 2/h for a unit-trace block
(validated by the normalization invariant; see the marginal cell-integration
note on `marginals`).

The conjugate position grid makes the field exactly periodic in r with period
n*dr, so position-direction operations (smoothing, shears) are circular;
momentum-direction smoothing is zero padded, since p is genuinely unbounded
and edge-safe fields decay there.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.signal import fftconvolve

from .errors import (
    InvalidParameterError,
    NonPhysicalStateError,
    WrongPictureError,
)
from .lattice import HBAR, PLANCK_H, PositionGrid, position_grid_for

__all__ = [
    "PhaseSpaceField",
    "centered_axis",
    "cell_axis",
    "wigner",
    "weierstrass_smooth",
    "husimi_direct",
    "marginals",
    "free_flight_shear",
]

FIELD_KINDS = ("wigner", "husimi", "histogram", "smoothed")
REALITY_TOL = 1e-10
NEGATIVITY_REL_TOL = 1e-9  # of the field peak; kernel-truncation zeros land here


def centered_axis(count, center_index, step):
    return (np.arange(count) - center_index) * step


def cell_axis(count, origin, cell):
    return origin + (np.arange(count) + 0.5) * cell


def build_axis(spec):
    tag = spec[0]
    if tag == "centered":
        return centered_axis(spec[1], spec[2], spec[3])
    if tag == "cells":
        return cell_axis(spec[1], spec[2], spec[3])
    raise InvalidParameterError(f"unknown axis spec {spec!r}")


def axis_step(spec):
    return spec[3]


@dataclass
class PhaseSpaceField:
    """Real-valued field on a (momentum, position) product grid.

    values[ip, ir]; axis specs are ("centered", count, center_index, step)
    for lattice-aligned axes or ("cells", count, origin, cell) for histogram
    cell centers. periodic_r marks fields living on the circular position grid.
    """

    values: np.ndarray
    kind: str
    p_spec: tuple
    r_spec: tuple
    time: float = 0.0
    periodic_r: bool = False
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise InvalidParameterError(f"unknown field kind {self.kind!r}")
        if self.values.shape != (self.p_spec[1], self.r_spec[1]):
            raise InvalidParameterError("field shape does not match axis specs")
        if self.kind in ("husimi", "histogram"):
            vmin = float(self.values.min())
            if vmin < 0.0:
                if vmin < -NEGATIVITY_REL_TOL * float(self.values.max()):
                    raise NonPhysicalStateError(
                        f"{self.kind} field has negative value {vmin:.3e}"
                    )
                self.values = np.maximum(self.values, 0.0)

    @property
    def p_axis(self):
        return build_axis(self.p_spec)

    @property
    def r_axis(self):
        return build_axis(self.r_spec)

    @property
    def p_step(self):
        return axis_step(self.p_spec)

    @property
    def r_step(self):
        return axis_step(self.r_spec)

    def integral(self):
        # rectangle rule on both axes: exact for the periodic r direction,
        # equal to trapezoid along p once the edges have decayed
        return float(self.values.sum()) * self.p_step * self.r_step

    def max(self):
        return float(self.values.max())


# --- Wigner transform -------------------------------------------------------

_SCATTER_CACHE = {}


def _scatter_indices(n):
    got = _SCATTER_CACHE.get(n)
    if got is None:
        j = np.arange(n)[:, None]
        k = np.arange(n)[None, :]
        got = (j + k, (k - j) % n)
        _SCATTER_CACHE[n] = got
    return got


def _block_wigner_values(block, grid, r_grid):
    """(2/h) * sum_j block[j, sigma-j] * exp(-i r u / hbar), via one FFT.

    u = (sigma - 2j)*dp; with r_i = (i - c)*dr and dr*dp*n = h the phase is
    exp(-2*pi*1j*(i - c)*(k - j)/n), exact after folding (k - j) mod n.
    """
    n = grid.n_points
    sig, mm = _scatter_indices(n)
    g = np.zeros((2 * n - 1, n), dtype=np.complex128)
    g[sig, mm] = block
    tw = np.exp(2j * np.pi * r_grid.center_index * np.arange(n) / n)
    w = np.fft.fft(g * tw[None, :], axis=1)
    w *= 2.0 / PLANCK_H
    return w


def _canonical_r_grid(grid, r_grid):
    canon = position_grid_for(grid)
    if r_grid is None:
        return canon
    if r_grid.n_points != canon.n_points or not math.isclose(
        r_grid.dr, canon.dr, rel_tol=1e-12
    ):
        raise InvalidParameterError(
            "r_grid must be the Fourier conjugate of the momentum grid"
        )
    return canon


def wigner(state, which="total", r_grid=None):
    """Wigner field of a density-matrix block sum; schrodinger picture only."""
    if state.picture != "schrodinger":
        raise WrongPictureError("wigner needs a schrodinger-picture state")
    if which not in ("g", "e", "total"):
        raise InvalidParameterError(f"which must be g, e or total, got {which!r}")
    grid = state.grid
    r_grid = _canonical_r_grid(grid, r_grid)
    if which == "g":
        block = state.blocks[0, 0]
    elif which == "e":
        block = state.blocks[1, 1]
    else:
        block = state.blocks[0, 0] + state.blocks[1, 1]
    w = _block_wigner_values(block, grid, r_grid)
    imag_max = float(np.abs(w.imag).max())
    if imag_max > REALITY_TOL:
        raise NonPhysicalStateError(
            f"Wigner imaginary residue {imag_max:.3e} exceeds {REALITY_TOL:.0e}; "
            "input block is not Hermitian"
        )
    n = grid.n_points
    return PhaseSpaceField(
        values=np.ascontiguousarray(w.real),
        kind="wigner",
        p_spec=("centered", 2 * n - 1, n - 1, grid.dp / 2.0),
        r_spec=("centered", n, r_grid.center_index, r_grid.dr),
        time=state.time,
        periodic_r=True,
        meta={"component": which},
    )


# --- smoothing ----------------------------------------------------------------

def _wrapped_gauss_kernel(n, step, sigma):
    # kernel centered at index 0 with minimal-image distances on the ring
    length = n * step
    d = (np.arange(n) * step + 0.5 * length) % length - 0.5 * length
    k = np.exp(-(d**2) / (2.0 * sigma**2))
    return k / k.sum()


def _linear_gauss_kernel(step, sigma):
    radius = int(math.ceil(6.0 * sigma / step))
    d = np.arange(-radius, radius + 1) * step
    k = np.exp(-(d**2) / (2.0 * sigma**2))
    return k / k.sum()


def weierstrass_smooth(field, sigma_r, sigma_p):
    """Gaussian phase-space convolution (unit-mass discrete kernels).

    Returns kind "husimi" when smoothing a Wigner field with a
    minimal-uncertainty kernel (sigma_r*sigma_p = hbar/2), else "smoothed".
    """
    if sigma_r <= 0 or sigma_p <= 0:
        raise InvalidParameterError("kernel widths must be positive")
    if sigma_r < field.r_step or sigma_p < field.p_step:
        raise InvalidParameterError(
            f"kernel ({sigma_r:.3g}, {sigma_p:.3g}) narrower than a grid cell "
            f"({field.r_step:.3g}, {field.p_step:.3g}): undersampled"
        )
    vals = field.values
    if field.periodic_r:
        kr = _wrapped_gauss_kernel(field.r_spec[1], field.r_step, sigma_r)
        vals = np.fft.irfft(
            np.fft.rfft(vals, axis=1) * np.fft.rfft(kr)[None, :],
            n=field.r_spec[1],
            axis=1,
        )
    else:
        kr = _linear_gauss_kernel(field.r_step, sigma_r)
        vals = fftconvolve(vals, kr[None, :], mode="same")
    kp = _linear_gauss_kernel(field.p_step, sigma_p)
    vals = fftconvolve(vals, kp[:, None], mode="same")

    minimal = field.kind == "wigner" and math.isclose(
        sigma_r * sigma_p, HBAR / 2.0, rel_tol=1e-12
    )
    kind = "husimi" if minimal else "smoothed"
    return PhaseSpaceField(
        values=vals,
        kind=kind,
        p_spec=field.p_spec,
        r_spec=field.r_spec,
        time=field.time,
        periodic_r=field.periodic_r,
        meta={"sigma_r": sigma_r, "sigma_p": sigma_p, "base": field.kind},
    )


# --- Husimi by coherent-state expectation ----------------------------------------

def husimi_direct(rho_a, grid, sigma_r, r_grid=None, time=0.0):
    """Q(r,p) = <alpha(r,p)| rho_A |alpha(r,p)> / (2 pi hbar), on the Wigner grids.

    rho_a is the schrodinger-picture external matrix (partial_trace_internal of
    to_schrodinger). sigma_p is implied by sigma_r*sigma_p = hbar/2. Independent
    of the smoothing route: used to cross-check weierstrass_smooth(wigner).
    """
    if sigma_r <= 0:
        raise InvalidParameterError("sigma_r must be positive")
    sigma_p = HBAR / (2.0 * sigma_r)
    n = grid.n_points
    r_grid = _canonical_r_grid(grid, r_grid)
    p = grid.points
    pbar = centered_axis(2 * n - 1, n - 1, grid.dp / 2.0)
    # envelope[s, j] = exp(-(p_j - pbar_s)^2 / (4 sigma_p^2)), per-column
    # renormalized so each discrete coherent state has exactly unit norm
    env = np.exp(-((p[None, :] - pbar[:, None]) ** 2) / (4.0 * sigma_p**2))
    env /= np.sqrt((env**2).sum(axis=1))[:, None]

    # c_n[s] = sum_j env[s,j] env[s,j+n] rho_a[j, j+n]; Hermiticity gives the
    # n < 0 half as the conjugate, so Q = pref * (2 Re F - c_0)
    x = np.zeros((2 * n - 1, n), dtype=np.complex128)
    for off in range(n):
        dd = env[:, : n - off] * env[:, off:]
        x[:, off] = np.einsum("sj,j->s", dd, rho_a.diagonal(off), optimize=False)
    tw = np.exp(2j * np.pi * r_grid.center_index * np.arange(n) / n)
    f = np.fft.fft(x * tw[None, :], axis=1)
    q = (2.0 * f.real - x[:, 0].real[:, None]) / PLANCK_H
    np.clip(q, 0.0, None, out=q)  # roundoff only: exact Q is >= 0
    return PhaseSpaceField(
        values=q,
        kind="husimi",
        p_spec=("centered", 2 * n - 1, n - 1, grid.dp / 2.0),
        r_spec=("centered", n, r_grid.center_index, r_grid.dr),
        time=time,
        periodic_r=True,
        meta={"sigma_r": sigma_r, "sigma_p": sigma_p, "base": "direct"},
    )


# --- marginals and shears -------------------------------------------------------

def marginals(field):
    """(position density, momentum density) with matching axes.

    Returns (r_axis, r_density, p_axis, p_density). For half-step lattice
    fields the momentum density is reported on the coarse lattice by
    integrating each dp cell with the trapezoid rule; this makes the Wigner
    momentum marginal equal populations/dp exactly (the odd half-step rows of
    a Wigner field integrate to zero over the periodic r axis, the even ones
    carry 2*rho_jj/dp, and the cell average recombines them).
    """
    r_density = field.values.sum(axis=0) * field.p_step
    if field.p_spec[0] == "cells":
        p_density = field.values.sum(axis=1) * field.r_step
        return field.r_axis, r_density, field.p_axis, p_density
    raw = field.values.sum(axis=1) * field.r_step  # density on half-step lattice
    count = field.p_spec[1]
    n = (count + 1) // 2
    padded = np.zeros(count + 2)
    padded[1:-1] = raw
    even = padded[1:-1][::2]
    mass = field.p_step * (0.5 * padded[:-2][::2] + even + 0.5 * padded[2:][::2])
    coarse_step = 2.0 * field.p_step
    p_spec = ("centered", n, (n - 1) // 2, coarse_step)
    return field.r_axis, r_density, build_axis(p_spec), mass / coarse_step


def free_flight_shear(field, t):
    """Evaluate the field at (r - p*t/m, p): exact free evolution of a Wigner
    field on the periodic position grid (Fourier interpolation per momentum row).
    """
    if not field.periodic_r:
        raise InvalidParameterError("shear needs a periodic position axis")
    n_r = field.r_spec[1]
    shift = field.p_axis * t / (0.5)  # m = 1/2 in recoil units: p/m = 2p
    freqs = np.arange(n_r // 2 + 1)
    phase = np.exp(
        -2j * np.pi * freqs[None, :] * (shift[:, None] / field.r_step) / n_r
    )
    vals = np.fft.irfft(np.fft.rfft(field.values, axis=1) * phase, n=n_r, axis=1)
    return PhaseSpaceField(
        values=vals,
        kind=field.kind,
        p_spec=field.p_spec,
        r_spec=field.r_spec,
        time=field.time + t,
        periodic_r=True,
        meta=dict(field.meta),
    )
