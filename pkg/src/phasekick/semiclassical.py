"""Test-particle ensemble: optical Bloch equations plus the radiation force.

Each particle carries (r, v) and slowly varying internal variables
(sigma11, sigma22, sigma21); the optical carrier is removed by the same
interaction-picture convention as the quantum module, so the effective phase
of beam L at a particle is k_L*r(t) - delta0_L*t - Phi_L and the coupled
system per active pulse is

    d(sigma21)/dt = (i/2) * Omega_tilde * (sigma11 - sigma22)
    d(sigma22)/dt = Im[conj(Omega_tilde) * sigma21]
    m * dv/dt     = hbar*k_L * Im[conj(Omega_tilde) * sigma21]

with Omega_tilde = Omega * exp(i*(k_L*r - delta0*t - Phi)). The force equals
hbar*k_L times the excitation rate, so for a single pulse the momentum
bookkeeping Delta(m v) = hbar*k_L * Delta(sigma22) is exact.

The ensemble integrator runs a rotating-frame reformulation (zeta =
sigma21*exp(-i*phase)) whose right-hand side is real and transcendental-free;
sin/cos appear only at segment edges. bloch_step is the scalar lab-frame
reference implementation of the same physics.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange, set_num_threads, config as numba_config
from scipy.special import ndtri

from .errors import IntegrationDivergedError, InvalidParameterError
from .lattice import PulseSequence, segment_plan
from .phasespace import PhaseSpaceField

__all__ = [
    "TestParticle",
    "EnsembleSpec",
    "Particles",
    "Histogram2D",
    "sample_ensemble",
    "bloch_step",
    "propagate_ensemble",
    "histogram",
    "to_field",
]

BLOCH_NORM_TOL = 1e-6


@dataclass
class TestParticle:
    r: float
    v: float
    s11: float = 1.0
    s22: float = 0.0
    s21: complex = 0.0 + 0.0j


@dataclass(frozen=True)
class EnsembleSpec:
    """sigma_r = inf draws positions uniformly over the position-grid period."""

    n: int
    sigma_r: float
    sigma_p: float
    seed: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParameterError(f"n must be >= 1, got {self.n}")


@dataclass
class Particles:
    r: np.ndarray
    v: np.ndarray
    s22: np.ndarray
    s21: np.ndarray  # complex128

    def __len__(self):
        return self.r.shape[0]

    @property
    def s11(self):
        return 1.0 - self.s22


def _uniforms(seed, start, count):
    """count x 2 doubles in (0,1) from the Philox stream keyed on seed.

    Each particle owns raw outputs (2i, 2i+1) of the stream, so any shard
    [start, start+count) reproduces exactly the same values regardless of how
    the ensemble is split across workers.  Philox.advance moves the counter in
    blocks of four 64-bit outputs; seek the enclosing block and drop the
    remainder to reach an arbitrary output offset.
    """
    bg = np.random.Philox(key=np.uint64(seed))
    first = 2 * start
    bg.advance(first // 4)
    skip = first % 4
    raw = bg.random_raw(skip + 2 * count)[skip:].reshape(count, 2)
    return ((raw >> np.uint64(11)) + 0.5) * 2.0**-53


def sample_ensemble(spec, start=0, count=None, box_length=None):
    """Draw particles [start, start+count) of the ensemble, ground state inside."""
    if count is None:
        count = spec.n - start
    if start < 0 or count < 0 or start + count > spec.n:
        raise InvalidParameterError("shard outside ensemble")
    u = _uniforms(spec.seed, start, count)
    if math.isfinite(spec.sigma_r):
        r = spec.sigma_r * ndtri(u[:, 0])
    else:
        if box_length is None:
            raise InvalidParameterError(
                "delocalized ensemble needs box_length (position-grid period)"
            )
        r = (u[:, 0] - 0.5) * box_length
    v = 2.0 * spec.sigma_p * ndtri(u[:, 1])  # v = p/m, m = 1/2
    return Particles(
        r=np.ascontiguousarray(r),
        v=np.ascontiguousarray(v),
        s22=np.zeros(count),
        s21=np.zeros(count, dtype=np.complex128),
    )


# --- scalar reference step ------------------------------------------------------

def _deriv(t, r, v, s22, s21, active, recoil_force):
    om_sum = 0.0 + 0.0j
    pop_rate = 0.0
    force = 0.0
    for pl in active:
        phase = pl.direction * r - pl.detuning * t - pl.phase
        om_t = pl.rabi * complex(math.cos(phase), math.sin(phase))
        term = (om_t.conjugate() * s21).imag
        om_sum += om_t
        pop_rate += term
        force += pl.direction * term  # hbar*k_L * Im[...] with hbar k = 1
    dv = 2.0 * force if recoil_force else 0.0  # F/m, m = 1/2
    ds21 = 0.5j * om_sum * (1.0 - 2.0 * s22)
    return v, dv, pop_rate, ds21


def bloch_step(particle, pulses, t, dt, recoil_force=True):
    """One lab-frame RK4 step; reference semantics for the ensemble kernels.

    recoil_force=False freezes v (the hbar*k -> 0 limit of the force), which
    is the regime of the textbook Rabi formulas.
    """
    if dt <= 0 or dt > 1e-3 + 1e-15:
        raise InvalidParameterError(f"dt must be in (0, 1e-3], got {dt}")
    if isinstance(pulses, PulseSequence):
        pulse_list = tuple(pulses)
    else:
        pulse_list = tuple(pulses)
    y = (particle.r, particle.v, particle.s22, particle.s21)

    def rhs(ti, yi):
        active = tuple(p for p in pulse_list if p.active(ti))
        return _deriv(ti, yi[0], yi[1], yi[2], yi[3], active, recoil_force)

    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, tuple(a + 0.5 * dt * b for a, b in zip(y, k1)))
    k3 = rhs(t + 0.5 * dt, tuple(a + 0.5 * dt * b for a, b in zip(y, k2)))
    k4 = rhs(t + dt, tuple(a + dt * b for a, b in zip(y, k3)))
    r, v, s22, s21 = (
        a + (dt / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
    )
    new = TestParticle(r=r, v=v, s11=1.0 - s22, s22=s22, s21=s21)
    excess = abs(s21) ** 2 - new.s11 * s22
    if excess > BLOCH_NORM_TOL:
        raise IntegrationDivergedError("bloch-norm", t + dt, excess)
    return new


# --- ensemble kernels -------------------------------------------------------------

@njit(cache=True, parallel=True, fastmath=True)
def _kick_single(r, v, s22, x, y, d, om, delta0, h, n_steps, force_on):
    # rotating frame zeta = x + i y; dphase/dt = d*v - delta0
    hw = 0.5 * om
    fv = 2.0 * d * om if force_on else 0.0
    for i in prange(r.shape[0]):
        ri = r[i]
        vi = v[i]
        si = s22[i]
        xi = x[i]
        yi = y[i]
        for _ in range(n_steps):
            pd = d * vi - delta0
            k1r = vi
            k1v = fv * yi
            k1s = om * yi
            k1x = pd * yi
            k1y = hw * (1.0 - 2.0 * si) - pd * xi

            v2 = vi + 0.5 * h * k1v
            s2 = si + 0.5 * h * k1s
            x2 = xi + 0.5 * h * k1x
            y2 = yi + 0.5 * h * k1y
            pd = d * v2 - delta0
            k2r = v2
            k2v = fv * y2
            k2s = om * y2
            k2x = pd * y2
            k2y = hw * (1.0 - 2.0 * s2) - pd * x2

            v3 = vi + 0.5 * h * k2v
            s3 = si + 0.5 * h * k2s
            x3 = xi + 0.5 * h * k2x
            y3 = yi + 0.5 * h * k2y
            pd = d * v3 - delta0
            k3r = v3
            k3v = fv * y3
            k3s = om * y3
            k3x = pd * y3
            k3y = hw * (1.0 - 2.0 * s3) - pd * x3

            v4 = vi + h * k3v
            s4 = si + h * k3s
            x4 = xi + h * k3x
            y4 = yi + h * k3y
            pd = d * v4 - delta0
            k4r = v4
            k4v = fv * y4
            k4s = om * y4
            k4x = pd * y4
            k4y = hw * (1.0 - 2.0 * s4) - pd * x4

            c = h / 6.0
            ri += c * (k1r + 2.0 * (k2r + k3r) + k4r)
            vi += c * (k1v + 2.0 * (k2v + k3v) + k4v)
            si += c * (k1s + 2.0 * (k2s + k3s) + k4s)
            xi += c * (k1x + 2.0 * (k2x + k3x) + k4x)
            yi += c * (k1y + 2.0 * (k2y + k3y) + k4y)
        r[i] = ri
        v[i] = vi
        s22[i] = si
        x[i] = xi
        y[i] = yi


@njit(cache=True, parallel=True, fastmath=True)
def _kick_multi(r, v, s22, cre, cim, dd, oo, d0, ph, t0, h, n_steps, force_on):
    # lab-frame sigma21 = cre + i cim; overlapping pulses, sincos per stage
    n_pulse = dd.shape[0]
    for i in prange(r.shape[0]):
        ri = r[i]
        vi = v[i]
        si = s22[i]
        ai = cre[i]
        bi = cim[i]
        t = t0
        for _ in range(n_steps):
            kr = np.empty(4)
            kv = np.empty(4)
            ks = np.empty(4)
            ka = np.empty(4)
            kb = np.empty(4)
            for stage in range(4):
                if stage == 0:
                    ts = t
                    r_, v_, s_, a_, b_ = ri, vi, si, ai, bi
                elif stage == 1:
                    ts = t + 0.5 * h
                    r_ = ri + 0.5 * h * kr[0]
                    v_ = vi + 0.5 * h * kv[0]
                    s_ = si + 0.5 * h * ks[0]
                    a_ = ai + 0.5 * h * ka[0]
                    b_ = bi + 0.5 * h * kb[0]
                elif stage == 2:
                    ts = t + 0.5 * h
                    r_ = ri + 0.5 * h * kr[1]
                    v_ = vi + 0.5 * h * kv[1]
                    s_ = si + 0.5 * h * ks[1]
                    a_ = ai + 0.5 * h * ka[1]
                    b_ = bi + 0.5 * h * kb[1]
                else:
                    ts = t + h
                    r_ = ri + h * kr[2]
                    v_ = vi + h * kv[2]
                    s_ = si + h * ks[2]
                    a_ = ai + h * ka[2]
                    b_ = bi + h * kb[2]
                sum_re = 0.0
                sum_im = 0.0
                pop = 0.0
                force = 0.0
                for l in range(n_pulse):
                    phi = dd[l] * r_ - d0[l] * ts - ph[l]
                    cph = math.cos(phi)
                    sph = math.sin(phi)
                    term = oo[l] * (b_ * cph - a_ * sph)
                    pop += term
                    force += dd[l] * term
                    sum_re += oo[l] * cph
                    sum_im += oo[l] * sph
                w = 1.0 - 2.0 * s_
                kr[stage] = v_
                kv[stage] = 2.0 * force if force_on else 0.0
                ks[stage] = pop
                ka[stage] = -0.5 * sum_im * w
                kb[stage] = 0.5 * sum_re * w
            c = h / 6.0
            ri += c * (kr[0] + 2.0 * (kr[1] + kr[2]) + kr[3])
            vi += c * (kv[0] + 2.0 * (kv[1] + kv[2]) + kv[3])
            si += c * (ks[0] + 2.0 * (ks[1] + ks[2]) + ks[3])
            ai += c * (ka[0] + 2.0 * (ka[1] + ka[2]) + ka[3])
            bi += c * (kb[0] + 2.0 * (kb[1] + kb[2]) + kb[3])
            t += h
        r[i] = ri
        v[i] = vi
        s22[i] = si
        cre[i] = ai
        cim[i] = bi


def _check_bloch_norm(parts, t):
    excess = np.abs(parts.s21) ** 2 - parts.s11 * parts.s22
    worst = int(np.argmax(excess))
    if excess[worst] > BLOCH_NORM_TOL:
        raise IntegrationDivergedError(
            "bloch-norm", t, float(excess[worst]), detail=f"particle {worst}"
        )


def propagate_ensemble(particles, pulses, dt=1e-3, t_end=None, recoil_force=True,
                       threads=1, sample_times=(), observer=None):
    """Integrate every particle to t_end (default: end of the sequence).

    Particles are independent; `threads` only spreads the loop and cannot
    change any trajectory. observer(t, particles) fires at each sample time
    (and must not mutate). Mutates and returns `particles`.
    """
    if dt <= 0 or dt > 1e-3 + 1e-15:
        raise InvalidParameterError(f"dt must be in (0, 1e-3], got {dt}")
    if not isinstance(pulses, PulseSequence):
        pulses = PulseSequence(tuple(pulses))
    if t_end is None:
        t_end = pulses.t_end
    set_num_threads(max(1, min(int(threads), numba_config.NUMBA_NUM_THREADS)))

    marks = sorted(float(s) for s in sample_times)
    t = 0.0
    if observer is not None and marks and abs(marks[0] - t) <= 1e-12:
        observer(t, particles)
        marks.pop(0)
    force_flag = bool(recoil_force)
    for a, b, active in segment_plan(pulses, t, t_end, marks):
        if len(active) == 0:
            particles.r += particles.v * (b - a)
        elif len(active) == 1:
            pl = active[0]
            phase_in = pl.direction * particles.r - pl.detuning * a - pl.phase
            zeta = particles.s21 * np.exp(-1j * phase_in)
            x = np.ascontiguousarray(zeta.real)
            y = np.ascontiguousarray(zeta.imag)
            n_steps = max(1, math.ceil((b - a) / dt - 1e-12))
            _kick_single(
                particles.r, particles.v, particles.s22, x, y,
                float(pl.direction), pl.rabi, pl.detuning,
                (b - a) / n_steps, n_steps, force_flag,
            )
            phase_out = pl.direction * particles.r - pl.detuning * b - pl.phase
            particles.s21 = (x + 1j * y) * np.exp(1j * phase_out)
        else:
            cre = np.ascontiguousarray(particles.s21.real)
            cim = np.ascontiguousarray(particles.s21.imag)
            n_steps = max(1, math.ceil((b - a) / dt - 1e-12))
            _kick_multi(
                particles.r, particles.v, particles.s22, cre, cim,
                np.array([float(p.direction) for p in active]),
                np.array([p.rabi for p in active]),
                np.array([p.detuning for p in active]),
                np.array([p.phase for p in active]),
                a, (b - a) / n_steps, n_steps, force_flag,
            )
            particles.s21 = cre + 1j * cim
        t = b
        _check_bloch_norm(particles, t)
        while marks and abs(marks[0] - t) <= 1e-12:
            if observer is not None:
                observer(t, particles)
            marks.pop(0)
    return particles


# --- histogramming ---------------------------------------------------------------

@dataclass
class Histogram2D:
    """Integer counts on half-open cells [n*cell, (n+1)*cell) in (p, r)."""

    cell_r: float
    cell_p: float
    origin_r: float  # left edge of the first r cell
    origin_p: float
    counts: np.ndarray  # shape (n_p, n_r), int64


def histogram(particles, cell_r, cell_p):
    """Bin particles by (momentum, position); index range is data-driven so
    the total count always equals the particle number."""
    if cell_r <= 0 or cell_p <= 0:
        raise InvalidParameterError("cell sizes must be positive")
    p = 0.5 * particles.v  # m*v
    ir = np.floor(particles.r / cell_r).astype(np.int64)
    ip = np.floor(p / cell_p).astype(np.int64)
    ir0, ir1 = int(ir.min()), int(ir.max())
    ip0, ip1 = int(ip.min()), int(ip.max())
    n_r = ir1 - ir0 + 1
    n_p = ip1 - ip0 + 1
    flat = (ip - ip0) * n_r + (ir - ir0)
    counts = np.bincount(flat, minlength=n_p * n_r).reshape(n_p, n_r)
    return Histogram2D(
        cell_r=cell_r,
        cell_p=cell_p,
        origin_r=ir0 * cell_r,
        origin_p=ip0 * cell_p,
        counts=counts,
    )


def to_field(hist, n_total, time=0.0):
    """Histogram as a unit-normalized phase-space density field."""
    values = hist.counts / (n_total * hist.cell_r * hist.cell_p)
    return PhaseSpaceField(
        values=values,
        kind="histogram",
        p_spec=("cells", hist.counts.shape[0], hist.origin_p, hist.cell_p),
        r_spec=("cells", hist.counts.shape[1], hist.origin_r, hist.cell_r),
        time=time,
        periodic_r=False,
        meta={"n_particles": int(hist.counts.sum())},
    )
