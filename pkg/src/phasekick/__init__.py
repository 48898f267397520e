"""phasekick: laser-kicked two-level atoms on a 1D momentum lattice.

Exact density-matrix evolution, test-particle (Bloch/Ehrenfest) ensembles,
phase-space fields, and the entropy bookkeeping that bounds how much a
closed pulse sequence can compress phase-space density.
"""

from .config import ExperimentConfig, load_config, parse_config, preset, preset_names
from .errors import (
    BoundaryError,
    ConfigError,
    IncompatibleBundlesError,
    IntegrationDivergedError,
    InvalidKindError,
    InvalidParameterError,
    NonPhysicalStateError,
    SimulationError,
    UnknownPresetError,
    UseShannonError,
    WrongPictureError,
)
from .harness import compare, run
from .lattice import (
    HBAR,
    PLANCK_H,
    UNITS,
    LaserPulse,
    MomentumGrid,
    PositionGrid,
    PulseSequence,
    RecoilUnits,
    make_momentum_grid,
    pi_pulse_duration,
    position_grid_for,
    shift_index,
)
from .metrics import (
    PsdReport,
    bound_check,
    generalized_entropy,
    psd_report,
    shannon,
    von_neumann,
    wehrl,
)
from .phasespace import (
    PhaseSpaceField,
    free_flight_shear,
    husimi_direct,
    marginals,
    weierstrass_smooth,
    wigner,
)
from .quantum import (
    DensityMatrix,
    GaussianStateSpec,
    coupling_rhs,
    gaussian_mixed_state,
    momentum_populations,
    partial_trace_internal,
    propagate,
    purity,
    thermal_diagonal_state,
    to_interaction,
    to_schrodinger,
)
from .semiclassical import (
    EnsembleSpec,
    Histogram2D,
    Particles,
    TestParticle,
    bloch_step,
    histogram,
    propagate_ensemble,
    sample_ensemble,
    to_field,
)

__version__ = "0.1.0"
