"""Entropies, phase-space densities D = exp(-S), and the level-count bound.

The scientific claim checked here: unitary laser manipulation of an atom with
M internal levels cannot raise any faithful external phase-space density by
more than a factor M. Spectral entropies (von Neumann) are exactly invariant;
informational ones (Shannon of a diagonal, Wehrl of the Husimi field) and the
distribution maxima obey the factor-M bound when the run starts from a
diagonal thermal state.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    InvalidKindError,
    InvalidParameterError,
    NonPhysicalStateError,
    UseShannonError,
)
from .lattice import PLANCK_H
from .phasespace import weierstrass_smooth, wigner
from .quantum import (
    DensityMatrix,
    full_matrix,
    momentum_populations,
    partial_trace_internal,
    to_schrodinger,
)

__all__ = [
    "von_neumann",
    "shannon",
    "generalized_entropy",
    "wehrl",
    "PsdReport",
    "psd_report",
    "BoundCheckResult",
    "bound_check",
    "GAIN_KEYS",
]

EIG_CLAMP = 1e-8
POP_CLAMP = 1e-12


def _entropy_of(p):
    p = p[p > 0.0]
    return float(-(p * np.log(p)).sum())


def von_neumann(rho):
    """-sum lambda ln lambda over the Hermitian spectrum (0 ln 0 = 0)."""
    if isinstance(rho, DensityMatrix):
        rho = full_matrix(rho)
    eig = np.linalg.eigvalsh(rho)
    if eig[0] < -EIG_CLAMP:
        raise NonPhysicalStateError(
            f"negative eigenvalue {eig[0]:.3e} below the {EIG_CLAMP:.0e} clamp"
        )
    return _entropy_of(np.clip(eig, 0.0, None))


def _clamped_populations(pops):
    pops = np.asarray(pops, dtype=float)
    if pops.min() < -POP_CLAMP:
        raise NonPhysicalStateError(
            f"population {pops.min():.3e} below the -{POP_CLAMP:.0e} clamp"
        )
    return np.clip(pops, 0.0, None)


def shannon(rho, basis="full"):
    """-sum p ln p over a diagonal.

    basis: "full" uses every |p, i> population; "external" the diagonal of
    rho_A; "ground" only the g-block diagonal (a pseudo-PSD: those weights do
    not sum to 1 and carry no density-matrix meaning, reported but never
    gated on). A plain vector of populations is also accepted.
    """
    if isinstance(rho, DensityMatrix):
        if basis == "full":
            pops = np.concatenate(
                [rho.blocks[0, 0].diagonal().real, rho.blocks[1, 1].diagonal().real]
            )
        elif basis == "external":
            pops = momentum_populations(rho, "total")
        elif basis == "ground":
            pops = momentum_populations(rho, "g")
        else:
            raise InvalidParameterError(
                f"basis must be full, external or ground, got {basis!r}"
            )
    else:
        pops = rho
    return _entropy_of(_clamped_populations(pops))


def generalized_entropy(populations, family="renyi", q=2.0):
    """Renyi log(sum p^q)/(1-q) or Tsallis (1 - sum p^q)/(q-1).

    q = inf (Renyi only) is the min-entropy -ln max p. q = 1 is the Shannon
    limit for both families; call shannon instead.
    """
    if q == 1:
        raise UseShannonError("q=1 is the Shannon limit; use shannon()")
    if q < 0:
        raise InvalidParameterError(f"q must be >= 0, got {q}")
    p = _clamped_populations(populations)
    p = p[p > 0.0]
    if family == "renyi":
        if math.isinf(q):
            return float(-np.log(p.max()))
        return float(np.log((p**q).sum()) / (1.0 - q))
    if family == "tsallis":
        if math.isinf(q):
            raise InvalidParameterError("q=inf is defined for the renyi family only")
        return float((1.0 - (p**q).sum()) / (q - 1.0))
    raise InvalidParameterError(f"family must be renyi or tsallis, got {family!r}")


def wehrl(q_field):
    """-integral Q ln(Q h) dr dp; the h-cell measure makes exp(-S) dimensionless
    and puts the Lieb minimum (any coherent state) at exactly 1."""
    if q_field.kind != "husimi":
        raise InvalidKindError(f"wehrl needs a husimi field, got {q_field.kind!r}")
    q = q_field.values
    mask = q > 0.0
    s = -(q[mask] * np.log(q[mask] * PLANCK_H)).sum()
    return float(s * q_field.p_step * q_field.r_step)


# --- report assembly ---------------------------------------------------------------

GAIN_KEYS = (
    "D_VN", "D_Sh", "D_VN_A", "D_Sh_A", "D_Sh_g", "D_Wehrl",
    "max_rho_A", "max_Q",
)


@dataclass
class PsdReport:
    time: float
    S_VN: float
    S_Sh: float
    S_VN_A: float
    S_Sh_A: float
    S_Sh_g: float
    max_rho_A: float
    max_Q: float
    S_Wehrl: float
    gains: dict = dc_field(default_factory=dict)

    @property
    def D_VN(self):
        return math.exp(-self.S_VN)

    @property
    def D_Sh(self):
        return math.exp(-self.S_Sh)

    @property
    def D_VN_A(self):
        return math.exp(-self.S_VN_A)

    @property
    def D_Sh_A(self):
        return math.exp(-self.S_Sh_A)

    @property
    def D_Sh_g(self):
        return math.exp(-self.S_Sh_g)

    @property
    def D_Wehrl(self):
        return math.exp(-self.S_Wehrl)

    def quantity(self, key):
        return getattr(self, key)


def psd_report(state, sigma_r, sigma_p, reference=None):
    """All density metrics of one interaction-picture snapshot.

    sigma_r, sigma_p set the Wigner coarse-graining kernel; when their product
    is hbar/2 the smoothed field is the Husimi function and the Wehrl entropy
    is defined (otherwise S_Wehrl is nan and excluded from any gating).
    Gains are relative to `reference` (the t=0 report), 1.0 when absent.
    """
    rho_a = partial_trace_internal(state)
    diag_a = rho_a.diagonal().real
    q_field = weierstrass_smooth(wigner(to_schrodinger(state)), sigma_r, sigma_p)
    rep = PsdReport(
        time=state.time,
        S_VN=von_neumann(state),
        S_Sh=shannon(state, "full"),
        S_VN_A=von_neumann(rho_a),
        S_Sh_A=shannon(state, "external"),
        S_Sh_g=shannon(state, "ground"),
        max_rho_A=float(diag_a.max()),
        max_Q=q_field.max(),
        S_Wehrl=wehrl(q_field) if q_field.kind == "husimi" else math.nan,
    )
    if reference is None:
        rep.gains = {k: 1.0 for k in GAIN_KEYS}
    else:
        rep.gains = {
            k: rep.quantity(k) / reference.quantity(k) for k in GAIN_KEYS
        }
    return rep


# --- the factor-M bound -------------------------------------------------------------

REL_TOL_TIGHT = 1e-6
REL_TOL_Q = 1e-3
ORDERING_SLACK = 1e-9


@dataclass
class BoundCheckResult:
    passed: bool
    m_levels: int
    max_gains: dict
    failures: list

    def lines(self):
        out = []
        for key, (gain, limit) in sorted(self.max_gains.items()):
            verdict = "PASS" if gain <= limit else "FAIL"
            out.append(f"{key}: max gain {gain:.9g} limit {limit:.9g} {verdict}")
        out.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return out


def bound_check(reports, m_levels=2):
    """Assert the factor-M inequalities at every sampled time.

    Gated quantities: max_rho_A and D_VN_A against M times their t=0 value,
    D_Sh_A against D_VN_A at the same time, max_Q against M times t=0 (with a
    looser grid-peak tolerance), and full-space D_Sh against its t=0 value.
    The ground-filtered pseudo-PSD is reported in max_gains but never gated.
    """
    if not reports:
        raise InvalidParameterError("bound_check needs at least one report")
    ref = reports[0]
    failures = []

    def gate(key, t, value, limit):
        if value > limit:
            failures.append((key, t, value, limit))

    for rep in reports:
        t = rep.time
        gate("max_rho_A", t, rep.max_rho_A,
             m_levels * ref.max_rho_A * (1 + REL_TOL_TIGHT))
        gate("D_VN_A", t, rep.D_VN_A, m_levels * ref.D_VN_A * (1 + REL_TOL_TIGHT))
        gate("D_Sh_A_vs_D_VN_A", t, rep.D_Sh_A, rep.D_VN_A + ORDERING_SLACK)
        gate("max_Q", t, rep.max_Q, m_levels * ref.max_Q * (1 + REL_TOL_Q))
        gate("D_Sh", t, rep.D_Sh, ref.D_Sh * (1 + REL_TOL_TIGHT))

    max_gains = {}
    for key, limit in (
        ("max_rho_A", m_levels * (1 + REL_TOL_TIGHT)),
        ("D_VN_A", m_levels * (1 + REL_TOL_TIGHT)),
        ("max_Q", m_levels * (1 + REL_TOL_Q)),
        ("D_Sh", 1 + REL_TOL_TIGHT),
        ("D_VN", math.inf),
        ("D_Sh_A", math.inf),
        ("D_Sh_g", math.inf),
        ("D_Wehrl", math.inf),
    ):
        gains = [rep.quantity(key) / ref.quantity(key) for rep in reports]
        gains = [g for g in gains if not math.isnan(g)]
        max_gains[key] = (max(gains) if gains else math.nan, limit)

    return BoundCheckResult(
        passed=not failures,
        m_levels=m_levels,
        max_gains=max_gains,
        failures=failures,
    )
