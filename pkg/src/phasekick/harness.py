"""Run one configured experiment and write / compare its output bundle.

A bundle directory holds config.toml, report.csv, verdict.txt and a fields/
subdirectory of plain-text arrays. Every file starts with the sha256 of the
canonical config, so mixed-up bundles are detectable. All floats are written
with %.17g: equal runs produce byte-identical bundles.
"""

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .config import canonical_toml, config_hash
from .errors import IncompatibleBundlesError
from .lattice import LaserPulse, PulseSequence, make_momentum_grid, position_grid_for
from .metrics import GAIN_KEYS, bound_check, psd_report
from .phasespace import husimi_direct, marginals, weierstrass_smooth, wigner
from .quantum import (
    GaussianStateSpec,
    gaussian_mixed_state,
    partial_trace_internal,
    propagate,
    to_schrodinger,
)
from .semiclassical import EnsembleSpec, histogram, propagate_ensemble, sample_ensemble, to_field

__all__ = ["RunResult", "CompareResult", "run", "compare", "read_field_file"]

REPORT_COLUMNS = (
    "time", "S_VN", "S_Sh", "S_VN_A", "S_Sh_A", "S_Sh_g",
    "max_rho_A", "max_Q", "S_Wehrl",
    "D_VN", "D_Sh", "D_VN_A", "D_Sh_A", "D_Sh_g", "D_Wehrl",
) + tuple(f"gain_{k}" for k in GAIN_KEYS)


def _g(x):
    return f"{float(x):.17g}"


@dataclass
class RunResult:
    config: object
    hash: str
    reports: list
    bound: object
    field_times: tuple
    fields: dict  # {time index: {name: PhaseSpaceField}}
    out_dir: object = None

    @property
    def passed(self):
        return self.bound.passed


def _p_marginal_spec(field):
    # marginals() reports half-step-lattice momentum densities on the coarse
    # dp lattice; cells axes pass through unchanged
    if field.p_spec[0] == "cells":
        return field.p_spec
    n = (field.p_spec[1] + 1) // 2
    return ("centered", n, (n - 1) // 2, 2.0 * field.p_step)


def _build_pulses(cfg):
    return PulseSequence(
        tuple(
            LaserPulse(
                direction=p.direction,
                rabi=p.rabi,
                detuning=p.detuning,
                phase=p.phase,
                t_start=p.t_start,
                t_stop=p.t_stop,
            )
            for p in cfg.pulses
        )
    )


def _quantum_part(cfg, grid, pulses, sample_times, field_slots):
    state = gaussian_mixed_state(
        grid, GaussianStateSpec(cfg.initial.sigma_r, cfg.initial.sigma_p)
    )
    sm = cfg.smoothing
    reports = []
    fields = {k: {} for k in field_slots.values()}

    def observer(snap):
        ref = reports[0] if reports else None
        reports.append(psd_report(snap, sm.sigma_r, sm.sigma_p, reference=ref))
        slot = field_slots.get(snap.time)
        if slot is None:
            return
        schro = to_schrodinger(snap)
        total = wigner(schro, "total")
        out = fields[slot]
        out["wigner_g"] = wigner(schro, "g")
        out["wigner_e"] = wigner(schro, "e")
        out["wigner_total"] = total
        out["smooth"] = weierstrass_smooth(total, sm.sigma_r, sm.sigma_p)
        out["husimi"] = husimi_direct(
            partial_trace_internal(schro), grid, sm.sigma_r, time=snap.time
        )
        _, r_den, _, p_den = marginals(total)
        out["marginal_r"] = (total.kind, snap.time, total.r_spec, r_den)
        out["marginal_p"] = (total.kind, snap.time, _p_marginal_spec(total), p_den)

    propagate(
        state, pulses, dt=cfg.integrator.dt, sample_times=sample_times,
        observer=observer, keep_snapshots=False,
    )
    return reports, fields


def _semiclassical_part(cfg, grid, pulses, field_slots, threads):
    sc = cfg.semiclassical
    sigma_r = cfg.initial.sigma_r if cfg.initial.kind == "gaussian" else math.inf
    spec = EnsembleSpec(n=sc.particles, sigma_r=sigma_r,
                        sigma_p=cfg.initial.sigma_p, seed=sc.seed)
    parts = sample_ensemble(spec, box_length=position_grid_for(grid).length)
    sm = cfg.smoothing
    fields = {}

    def observer(t, snapshot):
        hist = histogram(snapshot, sc.cell_r, sc.cell_p)
        f = to_field(hist, sc.particles, time=t)
        out = fields.setdefault(field_slots[t], {})
        out["hist"] = f
        out["hist_smooth"] = weierstrass_smooth(f, sm.sigma_r, sm.sigma_p)
        _, _, _, p_den = marginals(f)
        out["hist_marginal_p"] = (f.kind, t, _p_marginal_spec(f), p_den)

    times = sorted(field_slots)
    propagate_ensemble(
        parts, pulses, dt=cfg.integrator.dt,
        t_end=max([pulses.t_end] + times), threads=threads,
        sample_times=times, observer=observer,
    )
    return fields


def run(cfg, out_dir=None, threads=1):
    """Execute the quantum and (if configured) test-particle halves of cfg.

    Returns the in-memory result; when out_dir is given the bundle is also
    written there. The first sampled time is the gain reference, so configs
    should normally sample t=0.
    """
    digest = config_hash(cfg)
    grid = make_momentum_grid(cfg.grid.subdivision, cfg.grid.extent_recoils)
    pulses = _build_pulses(cfg)

    field_times = tuple(float(t) for t in cfg.integrator.field_times)
    sample_times = sorted(set(float(t) for t in cfg.integrator.sample_times)
                          | set(field_times))
    if not sample_times:
        sample_times = [0.0, pulses.t_end] if pulses.t_end > 0 else [0.0]
    field_slots = {t: k for k, t in enumerate(field_times)}

    reports, fields = _quantum_part(cfg, grid, pulses, sample_times, field_slots)

    if cfg.semiclassical.particles > 0 and field_times:
        for slot, named in _semiclassical_part(
            cfg, grid, pulses, field_slots, threads
        ).items():
            fields[slot].update(named)

    result = RunResult(
        config=cfg,
        hash=digest,
        reports=reports,
        bound=bound_check(reports, m_levels=2),
        field_times=field_times,
        fields=fields,
    )
    if out_dir is not None:
        result.out_dir = write_bundle(result, out_dir)
    return result


# --- bundle writing -----------------------------------------------------------------

def _axis_header(name, spec):
    kind = spec[0]
    if kind == "centered":
        return f"# axis {name}: centered {spec[1]} {spec[2]} {_g(spec[3])}"
    return f"# axis {name}: cells {spec[1]} {_g(spec[2])} {_g(spec[3])}"


def _field_lines(fld, digest):
    lines = [
        "# phasekick field v1",
        f"# config: {digest}",
        f"# kind: {fld.kind}",
    ]
    if "component" in fld.meta:
        lines.append(f"# component: {fld.meta['component']}")
    lines.append(f"# time: {_g(fld.time)}")
    lines.append(_axis_header("p", fld.p_spec))
    lines.append(_axis_header("r", fld.r_spec))
    for row in fld.values:
        lines.append(" ".join(_g(v) for v in row))
    return lines


def _marginal_lines(entry, axis_name, digest):
    kind, time, spec, values = entry
    lines = [
        "# phasekick marginal v1",
        f"# config: {digest}",
        f"# kind: {kind}",
        f"# time: {_g(time)}",
        _axis_header(axis_name, spec),
    ]
    lines.extend(_g(v) for v in values)
    return lines


def _write_text(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_bundle(result, out_dir):
    out = Path(out_dir)
    field_dir = out / "fields"
    field_dir.mkdir(parents=True, exist_ok=True)
    for stale in field_dir.glob("*.dat"):
        stale.unlink()

    digest = result.hash
    _write_text(out / "config.toml",
                [f"# config: {digest}", canonical_toml(result.config).rstrip("\n")])

    rows = [f"# config: {digest}", ",".join(REPORT_COLUMNS)]
    for rep in result.reports:
        vals = [rep.time, rep.S_VN, rep.S_Sh, rep.S_VN_A, rep.S_Sh_A, rep.S_Sh_g,
                rep.max_rho_A, rep.max_Q, rep.S_Wehrl,
                rep.D_VN, rep.D_Sh, rep.D_VN_A, rep.D_Sh_A, rep.D_Sh_g, rep.D_Wehrl]
        vals.extend(rep.gains[k] for k in GAIN_KEYS)
        rows.append(",".join(_g(v) for v in vals))
    _write_text(out / "report.csv", rows)

    for slot, named in sorted(result.fields.items()):
        for name, obj in sorted(named.items()):
            path = field_dir / f"t{slot}_{name}.dat"
            if name.startswith("marginal") or name.endswith("marginal_p"):
                axis = "p" if name.endswith("_p") else "r"
                _write_text(path, _marginal_lines(obj, axis, digest))
            else:
                _write_text(path, _field_lines(obj, digest))

    _write_text(out / "verdict.txt", [f"# config: {digest}"] + result.bound.lines())
    return out


# --- bundle reading and comparison ---------------------------------------------------

def _parse_header(lines):
    meta = {}
    body_start = 0
    for i, ln in enumerate(lines):
        if not ln.startswith("#"):
            body_start = i
            break
        key, _, val = ln[1:].partition(":")
        meta[key.strip()] = val.strip()
    else:
        body_start = len(lines)
    return meta, body_start


def _parse_axis(text):
    toks = text.split()
    if len(toks) != 4 or toks[0] not in ("centered", "cells"):
        raise IncompatibleBundlesError(f"malformed axis spec {text!r}")
    if toks[0] == "centered":
        return ("centered", int(toks[1]), int(toks[2]), float(toks[3]))
    return ("cells", int(toks[1]), float(toks[2]), float(toks[3]))


def read_field_file(path):
    """Parse one fields/*.dat file into (meta dict, values array).

    2D files get keys 'axis p' and 'axis r'; marginals have a single
    'axis p' or 'axis r' and a 1D values array.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    meta, body_start = _parse_header(lines)
    for key in ("axis p", "axis r"):
        if key in meta:
            meta[key] = _parse_axis(meta[key])
    body = [ln.split() for ln in lines[body_start:] if ln.strip()]
    values = np.array([[float(tok) for tok in row] for row in body])
    if ("axis p" in meta) != ("axis r" in meta):  # marginal: single axis
        values = values[:, 0]
    return meta, values


@dataclass
class CompareResult:
    matches: bool
    deviations: dict = dc_field(default_factory=dict)  # name -> (max diff, tol)

    def lines(self):
        out = []
        for name, (diff, tol) in sorted(self.deviations.items()):
            verdict = "OK" if diff <= tol else "DIFFERS"
            out.append(f"{name}: max|diff| {diff:.9g} tol {tol:.9g} {verdict}")
        out.append(f"overall: {'MATCH' if self.matches else 'MISMATCH'}")
        return out


def _nan_safe_maxdiff(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise IncompatibleBundlesError(f"shape mismatch {a.shape} vs {b.shape}")
    both_nan = np.isnan(a) & np.isnan(b)
    diff = np.abs(a - b)
    diff[both_nan] = 0.0
    if np.isnan(diff).any():
        return math.inf
    return float(diff.max()) if diff.size else 0.0


def _read_report(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    data_lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not data_lines:
        raise IncompatibleBundlesError(f"empty report {path}")
    header = data_lines[0]
    values = np.array(
        [[float(tok) for tok in ln.split(",")] for ln in data_lines[1:]]
    )
    return header, values


def _align_cells(spec_a, spec_b, axis_name):
    _, n_a, o_a, c_a = spec_a
    _, n_b, o_b, c_b = spec_b
    if not math.isclose(c_a, c_b, rel_tol=1e-12, abs_tol=0.0):
        raise IncompatibleBundlesError(
            f"{axis_name} cell size differs: {c_a!r} vs {c_b!r}"
        )
    shift = (o_b - o_a) / c_a
    if abs(shift - round(shift)) > 1e-9:
        raise IncompatibleBundlesError(f"{axis_name} cell lattices are offset")
    i_a = round(o_a / c_a)
    i_b = round(o_b / c_a)
    lo = min(i_a, i_b)
    hi = max(i_a + n_a, i_b + n_b)
    return hi - lo, i_a - lo, i_b - lo


def _embed(values, spec_a, spec_b, axes):
    """Zero-pad two cell-lattice arrays onto their common index window."""
    out_shape = []
    offs_a = []
    offs_b = []
    for spec_pair, name in zip(zip(spec_a, spec_b), axes):
        n, da, db = _align_cells(spec_pair[0], spec_pair[1], name)
        out_shape.append(n)
        offs_a.append(da)
        offs_b.append(db)
    a, b = values
    big_a = np.zeros(out_shape)
    big_b = np.zeros(out_shape)
    sl_a = tuple(slice(d, d + s) for d, s in zip(offs_a, a.shape))
    sl_b = tuple(slice(d, d + s) for d, s in zip(offs_b, b.shape))
    big_a[sl_a] = a
    big_b[sl_b] = b
    return big_a, big_b


def _compare_one(name, meta_a, val_a, meta_b, val_b):
    for key in ("kind", "time", "component"):
        if meta_a.get(key) != meta_b.get(key):
            raise IncompatibleBundlesError(
                f"{name}: {key} differs ({meta_a.get(key)!r} vs {meta_b.get(key)!r})"
            )
    axes = [k for k in ("axis p", "axis r") if k in meta_a or k in meta_b]
    specs_a = []
    specs_b = []
    for key in axes:
        sa, sb = meta_a.get(key), meta_b.get(key)
        if sa is None or sb is None or sa[0] != sb[0]:
            raise IncompatibleBundlesError(f"{name}: {key} structure differs")
        specs_a.append(sa)
        specs_b.append(sb)
    if all(s[0] == "cells" for s in specs_a):
        val_a, val_b = _embed((val_a, val_b), specs_a, specs_b, axes)
    else:
        for sa, sb in zip(specs_a, specs_b):
            if sa != sb:
                raise IncompatibleBundlesError(
                    f"{name}: axis spec differs ({sa} vs {sb})"
                )
    return _nan_safe_maxdiff(val_a, val_b)


def compare(dir_a, dir_b, field_tol=1e-6, report_tol=1e-6, histogram_tol=1e-2):
    """Numeric comparison of two bundles.

    Structural differences (grids, axes, file sets, column layout) raise
    IncompatibleBundlesError; numeric differences are collected per file and
    judged against the tolerances (histogram-derived files get histogram_tol).
    """
    dir_a, dir_b = Path(dir_a), Path(dir_b)
    deviations = {}

    head_a, rep_a = _read_report(dir_a / "report.csv")
    head_b, rep_b = _read_report(dir_b / "report.csv")
    if head_a != head_b:
        raise IncompatibleBundlesError("report.csv column layout differs")
    if rep_a.shape != rep_b.shape:
        raise IncompatibleBundlesError(
            f"report.csv row count differs: {rep_a.shape[0]} vs {rep_b.shape[0]}"
        )
    deviations["report.csv"] = (_nan_safe_maxdiff(rep_a, rep_b), report_tol)

    names_a = {p.name for p in (dir_a / "fields").glob("*.dat")}
    names_b = {p.name for p in (dir_b / "fields").glob("*.dat")}
    if names_a != names_b:
        raise IncompatibleBundlesError(
            f"field file sets differ: only-A={sorted(names_a - names_b)} "
            f"only-B={sorted(names_b - names_a)}"
        )
    for name in sorted(names_a):
        meta_a, val_a = read_field_file(dir_a / "fields" / name)
        meta_b, val_b = read_field_file(dir_b / "fields" / name)
        tol = histogram_tol if "hist" in name else field_tol
        deviations[f"fields/{name}"] = (
            _compare_one(name, meta_a, val_a, meta_b, val_b), tol,
        )

    matches = all(diff <= tol for diff, tol in deviations.values())
    return CompareResult(matches=matches, deviations=deviations)
