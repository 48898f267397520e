import math

import numpy as np
import pytest

from phasekick.errors import InvalidParameterError, NonPhysicalStateError
from phasekick.lattice import (
    HBAR,
    PLANCK_H,
    LaserPulse,
    PulseSequence,
    make_momentum_grid,
    position_grid_for,
)
from phasekick.phasespace import (
    PhaseSpaceField,
    free_flight_shear,
    husimi_direct,
    marginals,
    weierstrass_smooth,
    wigner,
)
from phasekick.quantum import (
    DensityMatrix,
    GaussianStateSpec,
    gaussian_mixed_state,
    momentum_populations,
    partial_trace_internal,
    propagate,
    to_schrodinger,
    thermal_diagonal_state,
)

COHERENT_Q_PEAK = 0.15915494309189535  # 1/(2 pi hbar)


def random_state(grid, seed, picture="schrodinger"):
    rng = np.random.default_rng(seed)
    n = grid.n_points
    blocks = np.zeros((2, 2, n, n), dtype=np.complex128)
    # positive by construction, then edge-tapered so the state is grid-safe
    for lvl in (0, 1):
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        taper = np.exp(-((grid.points / (0.5 * grid.points[-1])) ** 4))
        a *= taper[:, None]
        blocks[lvl, lvl] = a @ a.conj().T
    tr = blocks[0, 0].trace().real + blocks[1, 1].trace().real
    blocks /= tr
    return DensityMatrix(grid, blocks, time=0.0, picture=picture)


def brute_force_wigner(state):
    """Direct double sum W(pbar, r) = (2/h) sum_jk rho[j,k] e^{+i(pj-pk)r/hbar}.

    Independent of the production scatter+FFT path.
    """
    grid = state.grid
    rho = state.blocks[0, 0] + state.blocks[1, 1]
    n = grid.n_points
    p = grid.points
    r = position_grid_for(grid).points
    out = np.zeros((2 * n - 1, n))
    for j in range(n):
        for k in range(n):
            m = j + k  # antidiagonal index = half-step momentum slot
            phase = np.exp(1j * (p[j] - p[k]) * r / HBAR)
            out[m] += (rho[j, k] * phase).real
    return out * 2.0 / PLANCK_H


def test_wigner_matches_brute_force():
    grid = make_momentum_grid(2, 3)
    st = random_state(grid, seed=11)
    w = wigner(st)
    ref = brute_force_wigner(st)
    assert w.values.shape == ref.shape
    assert np.abs(w.values - ref).max() < 1e-12


def test_wigner_component_split():
    grid = make_momentum_grid(2, 3)
    st = random_state(grid, seed=3)
    total = wigner(st, "total")
    g = wigner(st, "g")
    e = wigner(st, "e")
    assert np.abs(total.values - g.values - e.values).max() < 1e-13
    with pytest.raises(InvalidParameterError):
        wigner(st, "both")


def test_gaussian_wigner_peak_and_norm():
    grid = make_momentum_grid(10, 8)
    sr, sp = 1.3, 0.9
    st = to_schrodinger(gaussian_mixed_state(grid, GaussianStateSpec(sr, sp)))
    w = wigner(st)
    assert w.max() == pytest.approx(1.0 / (2 * math.pi * sr * sp), rel=1e-10)
    assert w.integral() == pytest.approx(1.0, abs=1e-9)


def test_momentum_marginal_equals_populations():
    grid = make_momentum_grid(10, 6)
    st = gaussian_mixed_state(grid, GaussianStateSpec(1.0, 1.0))
    seq = PulseSequence([
        LaserPulse(direction=-1, rabi=2.0, detuning=-2.0,
                   t_start=0.0, t_stop=math.pi / 2)
    ])
    propagate(st, seq, dt=1e-3)
    w = wigner(to_schrodinger(st))
    _, r_den, p_axis, p_den = marginals(w)
    pops = momentum_populations(st, "total")
    assert p_axis.shape == pops.shape
    assert np.abs(p_den - pops / grid.dp).max() < 1e-12
    # position marginal integrates to one as well
    assert r_den.sum() * w.r_step == pytest.approx(1.0, abs=1e-9)


def test_smoothing_preserves_mass_and_semigroup():
    grid = make_momentum_grid(10, 8)
    st = to_schrodinger(gaussian_mixed_state(grid, GaussianStateSpec(1.0, 1.0)))
    w = wigner(st)
    once = weierstrass_smooth(w, 0.5, 0.4)
    assert once.integral() == pytest.approx(w.integral(), abs=1e-9)
    twice = weierstrass_smooth(once, 0.5, 0.3)
    combined = weierstrass_smooth(w, math.hypot(0.5, 0.5), 0.5)
    assert np.abs(twice.values - combined.values).max() < 1e-8 * combined.max()


def test_smoothing_kind_tags():
    grid = make_momentum_grid(10, 6)
    w = wigner(to_schrodinger(thermal_diagonal_state(grid, 1.0)))
    s = 2 ** -0.5
    assert weierstrass_smooth(w, s, s).kind == "husimi"
    assert weierstrass_smooth(w, 1.0, 1.0).kind == "smoothed"
    with pytest.raises(InvalidParameterError):
        weierstrass_smooth(w, 1e-3, 1.0)  # narrower than a cell


def test_husimi_direct_matches_smoothed_wigner():
    grid = make_momentum_grid(10, 6)
    st = gaussian_mixed_state(grid, GaussianStateSpec(1.0, 1.0))
    seq = PulseSequence([
        LaserPulse(direction=+1, rabi=2.0, detuning=-2.0,
                   t_start=0.0, t_stop=math.pi / 2)
    ])
    propagate(st, seq, dt=1e-3)
    schro = to_schrodinger(st)
    s = 2 ** -0.5
    smoothed = weierstrass_smooth(wigner(schro), s, s)
    direct = husimi_direct(partial_trace_internal(schro), grid, s, time=st.time)
    assert direct.kind == "husimi"
    assert np.abs(direct.values - smoothed.values).max() < 1e-4 * direct.max()


def test_coherent_state_husimi_peak():
    grid = make_momentum_grid(10, 8)
    s = 2 ** -0.5
    st = to_schrodinger(gaussian_mixed_state(grid, GaussianStateSpec(s, s)))
    q = weierstrass_smooth(wigner(st), s, s)
    assert q.max() == pytest.approx(COHERENT_Q_PEAK, abs=1e-9)


def test_husimi_peak_is_never_exceeded():
    # 1/(2 pi hbar) bounds the Husimi maximum for every state
    grid = make_momentum_grid(4, 6)
    s = 2 ** -0.5
    for seed in range(5):
        st = random_state(grid, seed=seed)
        q = weierstrass_smooth(wigner(st), s, s)
        assert q.max() <= COHERENT_Q_PEAK * (1 + 1e-9)


def test_free_flight_shear_matches_kinetic_evolution():
    grid = make_momentum_grid(10, 6)
    st = gaussian_mixed_state(
        grid, GaussianStateSpec(1.0, 1.0, mean_r=2.0, mean_p=0.5)
    )
    w0 = wigner(to_schrodinger(st))
    t = 0.7
    propagate(st, PulseSequence([]), dt=1e-3, sample_times=[t])
    wt = wigner(to_schrodinger(st))
    sheared = free_flight_shear(w0, t)
    assert np.abs(sheared.values - wt.values).max() < 1e-6 * wt.max()


def test_free_flight_shear_roundtrip():
    grid = make_momentum_grid(8, 4)
    w = wigner(random_state(grid, seed=2))
    back = free_flight_shear(free_flight_shear(w, 0.4), -0.4)
    assert np.abs(back.values - w.values).max() < 1e-12


def test_field_validation():
    vals = np.ones((3, 4))
    p_spec = ("centered", 3, 1, 0.5)
    r_spec = ("centered", 4, 2, 0.25)
    with pytest.raises(InvalidParameterError):
        PhaseSpaceField(vals, "spectrogram", p_spec, r_spec)
    with pytest.raises(InvalidParameterError):
        PhaseSpaceField(np.ones((4, 3)), "wigner", p_spec, r_spec)


def test_nonnegative_kinds_guard():
    p_spec = ("cells", 3, 0.0, 0.5)
    r_spec = ("cells", 3, 0.0, 0.5)
    bad = np.ones((3, 3))
    bad[1, 1] = -0.1
    with pytest.raises(NonPhysicalStateError):
        PhaseSpaceField(bad, "histogram", p_spec, r_spec)
    # roundoff-scale negatives are clamped, not fatal
    almost = np.ones((3, 3))
    almost[1, 1] = -1e-12
    f = PhaseSpaceField(almost, "husimi", p_spec, r_spec)
    assert f.values.min() == 0.0
    # wigner fields may be negative: that is the point
    PhaseSpaceField(bad, "wigner", p_spec, r_spec)
