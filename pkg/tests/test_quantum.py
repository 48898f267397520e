import math

import numpy as np
import pytest

from phasekick.errors import (
    BoundaryError,
    InvalidParameterError,
    WrongPictureError,
)
from phasekick.lattice import LaserPulse, PulseSequence, make_momentum_grid
from phasekick.quantum import (
    DensityMatrix,
    GaussianStateSpec,
    coupling_rhs,
    full_matrix,
    gaussian_mixed_state,
    momentum_populations,
    partial_trace_internal,
    propagate,
    purity,
    thermal_diagonal_state,
    to_interaction,
    to_schrodinger,
)

# generalized Rabi transfer (Omega^2/Omega_g^2) sin^2(Omega_g t / 2) at
# delta = Omega, t = pi/Omega; value cross-checked against a direct
# solve_ivp integration of the two-level TDSE (agreement 3e-13)
DETUNED_TRANSFER = 0.31656383551035383


def eigenstate(grid, k_recoils=0, level=0):
    """All population in |level, p = k_recoils * hbar k>."""
    blocks = np.zeros((2, 2, grid.n_points, grid.n_points), dtype=np.complex128)
    idx = grid.center_index + k_recoils * grid.subdivision
    blocks[level, level][idx, idx] = 1.0
    return DensityMatrix(grid, blocks, time=0.0, picture="interaction")


def pulse(direction=+1, rabi=2.0, detuning=0.0, t0=0.0, t1=None, phase=0.0):
    if t1 is None:
        t1 = t0 + math.pi / rabi
    return LaserPulse(direction=direction, rabi=rabi, detuning=detuning,
                      phase=phase, t_start=t0, t_stop=t1)


def test_state_constructors_basic_invariants():
    grid = make_momentum_grid(10, 8)
    for st in (
        thermal_diagonal_state(grid, 1.0),
        gaussian_mixed_state(grid, GaussianStateSpec(1.0, 1.0)),
        gaussian_mixed_state(grid, GaussianStateSpec(math.inf, 1.2)),
    ):
        assert st.trace() == pytest.approx(1.0, abs=1e-12)
        assert st.hermiticity_defect() < 1e-14
        assert st.edge_population() < 1e-6
        assert momentum_populations(st, "e").max() == 0.0


def test_gaussian_purity_formula():
    grid = make_momentum_grid(10, 8)
    # purity = hbar / (2 sigma_r sigma_p)
    st = gaussian_mixed_state(grid, GaussianStateSpec(1.0, 1.0))
    assert purity(st) == pytest.approx(0.5, rel=1e-10)
    pure = gaussian_mixed_state(grid, GaussianStateSpec(2 ** -0.5, 2 ** -0.5))
    assert purity(pure) == pytest.approx(1.0, rel=1e-10)


def test_gaussian_below_heisenberg_rejected():
    grid = make_momentum_grid(10, 8)
    with pytest.raises(InvalidParameterError):
        gaussian_mixed_state(grid, GaussianStateSpec(0.5, 0.5))


def test_too_wide_cloud_hits_edge_guard():
    grid = make_momentum_grid(4, 2)
    with pytest.raises(BoundaryError):
        thermal_diagonal_state(grid, 3.0)


def test_resonant_pi_pulse_full_transfer():
    grid = make_momentum_grid(10, 4)
    st = eigenstate(grid, 0)
    # family |g, 0> <-> |e, +1>: resonance at delta0 = 2*d*q + 1 = 1
    p = pulse(direction=+1, rabi=2.0, detuning=1.0)
    propagate(st, PulseSequence([p]), dt=1e-3)
    idx = grid.center_index + grid.subdivision
    assert momentum_populations(st, "e")[idx] == pytest.approx(1.0, abs=1e-9)
    assert momentum_populations(st, "g").sum() == pytest.approx(0.0, abs=1e-9)


def test_detuned_pulse_against_rabi_formula():
    grid = make_momentum_grid(10, 4)
    st = eigenstate(grid, 0)
    # family detuning delta0 - 2 d q - 1 = 2 = Omega, duration pi/Omega
    p = pulse(direction=+1, rabi=2.0, detuning=3.0, t1=math.pi / 2.0)
    propagate(st, PulseSequence([p]), dt=1e-3)
    idx = grid.center_index + grid.subdivision
    assert momentum_populations(st, "e")[idx] == pytest.approx(
        DETUNED_TRANSFER, abs=1e-9
    )


def test_family_pair_conserved_during_pulse():
    grid = make_momentum_grid(10, 6)
    st = thermal_diagonal_state(grid, 1.0)
    p = pulse(direction=-1, rabi=2.0, detuning=-2.0, t1=math.pi / 2)
    pops0 = momentum_populations(st, "g")
    marks = [0.3, 0.9, math.pi / 2]
    snaps = propagate(st, PulseSequence([p]), dt=1e-3, sample_times=marks)
    for snap in snaps:
        g = momentum_populations(snap, "g")
        e = momentum_populations(snap, "e")
        # population of |g, q> only trades with |e, q + d>
        q = np.arange(grid.n_points)
        partner = q + p.direction * grid.subdivision
        ok = (partner >= 0) & (partner < grid.n_points)
        total = g[q[ok]] + e[partner[ok]]
        assert np.abs(total - pops0[q[ok]]).max() < 1e-12


def test_propagation_preserves_spectrum_and_purity():
    grid = make_momentum_grid(8, 6)
    st = gaussian_mixed_state(grid, GaussianStateSpec(1.5, 0.8))
    eig0 = np.sort(np.linalg.eigvalsh(full_matrix(st)))
    pur0 = purity(st)
    seq = PulseSequence([
        pulse(direction=-1, rabi=2.0, detuning=-2.0, t1=math.pi / 2),
        pulse(direction=+1, rabi=1.3, detuning=0.7, t0=math.pi / 2, t1=2.2),
    ])
    propagate(st, seq, dt=1e-3)
    assert st.trace() == pytest.approx(1.0, abs=1e-12)
    assert st.hermiticity_defect() < 1e-12
    assert purity(st) == pytest.approx(pur0, abs=1e-10)
    eig1 = np.sort(np.linalg.eigvalsh(full_matrix(st)))
    assert np.abs(eig1 - eig0).max() < 1e-8


def test_step_halving_convergence():
    grid = make_momentum_grid(6, 6)
    seq = PulseSequence([pulse(direction=+1, rabi=2.0, detuning=-1.0, t1=1.5)])
    out = {}
    for dt in (2e-3, 1e-3):
        st = gaussian_mixed_state(grid, GaussianStateSpec(1.0, 1.0))
        propagate(st, seq, dt=dt)
        out[dt] = full_matrix(st)
    # RK4: sixteenfold error drop per halving leaves differences ~ dt^4
    assert np.abs(out[2e-3] - out[1e-3]).max() < 1e-9


def test_rhs_structure():
    grid = make_momentum_grid(6, 6)
    st = thermal_diagonal_state(grid, 1.0)
    p = pulse(direction=-1, rabi=1.7, detuning=0.4, t1=2.0)
    d = coupling_rhs(st, 0.3, PulseSequence([p]))
    ds = DensityMatrix(grid, d, time=0.3, picture="interaction")
    assert ds.hermiticity_defect() < 1e-14
    assert abs(ds.trace()) < 1e-14


def test_picture_roundtrip():
    grid = make_momentum_grid(8, 6)
    st = gaussian_mixed_state(grid, GaussianStateSpec(1.0, 1.0))
    propagate(st, PulseSequence([pulse(direction=+1, rabi=2.0, t1=0.7)]), dt=1e-3)
    schro = to_schrodinger(st)
    back = to_interaction(schro)
    assert np.abs(back.blocks - st.blocks).max() < 1e-14
    with pytest.raises(WrongPictureError):
        to_schrodinger(schro)
    with pytest.raises(WrongPictureError):
        to_interaction(st)
    with pytest.raises(WrongPictureError):
        propagate(schro, PulseSequence([]))


def test_partial_trace_and_populations_agree():
    grid = make_momentum_grid(8, 6)
    st = gaussian_mixed_state(grid, GaussianStateSpec(2.0, 0.9))
    propagate(st, PulseSequence([pulse(direction=-1, rabi=2.0, t1=0.9)]), dt=1e-3)
    rho_a = partial_trace_internal(st)
    assert np.abs(
        rho_a.diagonal().real - momentum_populations(st, "total")
    ).max() < 1e-14


def test_snapshots_are_deep_copies():
    grid = make_momentum_grid(6, 6)
    st = thermal_diagonal_state(grid, 1.0)
    seq = PulseSequence([pulse(direction=+1, rabi=2.0, detuning=1.0, t1=1.0)])
    snaps = propagate(st, seq, dt=1e-3, sample_times=[0.5, 1.0])
    snaps[0].blocks[0, 0][:] = 0.0
    assert st.trace() == pytest.approx(1.0, abs=1e-12)
    assert snaps[1].trace() == pytest.approx(1.0, abs=1e-12)


def test_empty_sequence_is_identity():
    grid = make_momentum_grid(6, 6)
    st = thermal_diagonal_state(grid, 1.0)
    before = st.blocks.copy()
    snaps = propagate(st, PulseSequence([]), dt=1e-3, sample_times=[0.0])
    assert np.array_equal(st.blocks, before)
    assert len(snaps) == 1 and snaps[0].time == 0.0


def test_sample_time_validation():
    grid = make_momentum_grid(6, 6)
    st = thermal_diagonal_state(grid, 1.0)
    with pytest.raises(InvalidParameterError):
        propagate(st, PulseSequence([]), sample_times=[0.5, 0.5])
    with pytest.raises(InvalidParameterError):
        propagate(st, PulseSequence([]), dt=-1.0)
