"""Experiment drivers behind the command line.

Each driver turns a validated config into CSV tables plus a manifest JSON.
Runs are deterministic: floats are written with repr (shortest round-trip
decimal), parallel work is merged by task index, and the manifest records a
hash of the canonical config rendering so two runs can be compared byte for
byte. Per-point failures are recorded in the manifest and the run continues.
"""

import hashlib
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli

from . import core, dynamics, moyal, spectrum, steadystate, wigner
from .dynamics import SLParams
from .exceptions import (BelowBifurcation, ConfigError, DimTooLarge, InvalidSpec,
                         NotReached, ParseError, QslError)

log = logging.getLogger("qsl.experiments")

MANIFEST_SCHEMA = 1

KINDS = ("steady_tiles", "wigner_cuts", "evolution_snapshots", "coherence_tiles",
         "negativity_traces", "gap_tiles", "tss_tiles", "tss_slices", "derive_eom")

# Boundary weight above 1e-8 of the peak trips the grid-extent check, so
# experiment grids carry a wider margin than the +3 sigma plotting default.
GRID_MARGIN = 4.5


# ---------------------------------------------------------------------------
# deterministic emission

def fmt_float(v):
    """Shortest decimal that round-trips to the same double."""
    return repr(float(v))


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
    return len(lines) - 1


def _slug(text):
    out = re.sub(r"[^A-Za-z0-9._+-]+", "-", str(text)).strip("-")
    return out or "item"


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ConfigError(f"non-finite value {v!r} is not representable")
        return fmt_float(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        if v and all(isinstance(e, dict) for e in v):
            inner = []
            for e in v:
                pairs = ", ".join(f"{k} = {_toml_value(e[k])}" for k in sorted(e))
                inner.append("{" + pairs + "}")
            return "[" + ", ".join(inner) + "]"
        return "[" + ", ".join(_toml_value(e) for e in v) + "]"
    raise ConfigError(f"cannot serialize {type(v).__name__} to config text")


def config_to_toml(data):
    """Canonical rendering: sorted keys, scalars before sub-tables."""
    lines = []

    def emit(table, prefix):
        scalars = {k: v for k, v in table.items() if not isinstance(v, dict)}
        subs = {k: v for k, v in table.items() if isinstance(v, dict)}
        for k in sorted(scalars):
            lines.append(f"{k} = {_toml_value(scalars[k])}")
        for k in sorted(subs):
            name = f"{prefix}.{k}" if prefix else k
            lines.append("")
            lines.append(f"[{name}]")
            emit(subs[k], name)

    emit(data, "")
    return "\n".join(lines).lstrip("\n") + "\n"


def config_hash(data):
    return "sha256:" + hashlib.sha256(config_to_toml(data).encode()).hexdigest()


# ---------------------------------------------------------------------------
# config schema

@dataclass(frozen=True)
class ExperimentConfig:
    """Normalized experiment description; `data` round-trips through TOML."""

    kind: str
    out: str
    workers: int
    options: dict

    @property
    def data(self):
        return {"schema": 1, "kind": self.kind, "out": self.out,
                "workers": self.workers, self.kind: self.options}


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    errors: tuple
    warnings: tuple
    cost: dict

    def lines(self):
        out = []
        for e in self.errors:
            out.append(f"error: {e}")
        for w in self.warnings:
            out.append(f"warning: {w}")
        out.append(f"tasks: {self.cost['tasks']}, largest dimension: "
                   f"{self.cost['max_dim']}")
        out.append("OK" if self.ok else "INVALID")
        return out


def _want(table, key, types, where, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"{where}.{key}: required")
        return default
    v = table[key]
    if types is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, types) or isinstance(v, bool) and types is not bool:
        raise ConfigError(f"{where}.{key}: expected {getattr(types, '__name__', types)},"
                          f" got {type(v).__name__}")
    if isinstance(v, float) and not math.isfinite(v):
        raise ConfigError(f"{where}.{key}: must be finite")
    return v


def _float_list(table, key, where, default):
    v = table.get(key, list(default))
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{where}.{key}: expected a nonempty array of numbers")
    out = []
    for e in v:
        if isinstance(e, bool) or not isinstance(e, (int, float)) or not math.isfinite(float(e)):
            raise ConfigError(f"{where}.{key}: expected finite numbers, got {e!r}")
        out.append(float(e))
    return out


def _axis(table, key, where, default):
    raw = table.get(key, dict(default))
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}.{key}: expected a table with lo/hi/points/spacing")
    w = f"{where}.{key}"
    lo = _want(raw, "lo", float, w, required=True)
    hi = _want(raw, "hi", float, w, required=True)
    points = _want(raw, "points", int, w, required=True)
    spacing = _want(raw, "spacing", str, w, default="log")
    for k in raw:
        if k not in ("lo", "hi", "points", "spacing"):
            raise ConfigError(f"{w}.{k}: unknown key")
    if spacing not in ("log", "linear"):
        raise ConfigError(f"{w}.spacing: must be 'log' or 'linear'")
    if not 1 <= points <= 64:
        raise ConfigError(f"{w}.points: must be in 1..64")
    if spacing == "log" and lo <= 0:
        raise ConfigError(f"{w}.lo: log spacing needs lo > 0")
    if hi < lo:
        raise ConfigError(f"{w}: hi < lo")
    return {"lo": lo, "hi": hi, "points": points, "spacing": spacing}


def axis_values(axis):
    if axis["points"] == 1:
        return np.array([axis["lo"]])
    if axis["spacing"] == "log":
        return np.geomspace(axis["lo"], axis["hi"], axis["points"])
    return np.linspace(axis["lo"], axis["hi"], axis["points"])


def _rate_table(raw, where, extra=()):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a table of rates")
    out = {}
    for k in ("kappa1", "gamma1", "gamma2"):
        out[k] = _want(raw, k, float, where, required=True)
        if out[k] < 0:
            raise ConfigError(f"{where}.{k}: must be >= 0")
    allowed = set(("kappa1", "gamma1", "gamma2")) | set(extra)
    for k in raw:
        if k not in allowed:
            raise ConfigError(f"{where}.{k}: unknown key")
    return out


def _state_text(table, key, where, default):
    v = table.get(key, list(default))
    if not isinstance(v, list) or not all(isinstance(e, str) for e in v) or not v:
        raise ConfigError(f"{where}.{key}: expected a nonempty array of state strings")
    for e in v:
        try:
            core.parse_state_spec(e)
        except QslError as err:
            raise ConfigError(f"{where}.{key}: {err}") from err
    return list(v)


def _check_unknown(table, allowed, where):
    for k in table:
        if k not in allowed:
            raise ConfigError(f"{where}.{k}: unknown key")


_DEF_A = {"lo": 0.1, "hi": 100.0, "points": 8, "spacing": "log"}
_DEF_B = {"lo": 0.01, "hi": 100.0, "points": 8, "spacing": "log"}


def _norm_steady_tiles(t, w):
    out = {
        "basis_kappa1": _want(t, "basis_kappa1", float, w, default=1.0),
        "grid_a": _axis(t, "grid_a", w, {**_DEF_A, "points": 10}),
        "grid_b": _axis(t, "grid_b", w, {**_DEF_B, "points": 10}),
        "dim_margin": _want(t, "dim_margin", int, w, default=12),
        "agreement_band": _want(t, "agreement_band", float, w, default=0.05),
    }
    if out["basis_kappa1"] <= 0:
        raise ConfigError(f"{w}.basis_kappa1: must be > 0")
    _check_unknown(t, out, w)
    return out


_FIG2_CASES = ({"kappa1": 1.0, "gamma1": 0.9, "gamma2": 0.2},
               {"kappa1": 1.0, "gamma1": 0.9, "gamma2": 0.005},
               {"kappa1": 1.0, "gamma1": 0.1, "gamma2": 0.045})


def _norm_wigner_cuts(t, w):
    raw_cases = t.get("cases", [dict(c) for c in _FIG2_CASES])
    if not isinstance(raw_cases, list) or not raw_cases:
        raise ConfigError(f"{w}.cases: expected a nonempty array of rate tables")
    cases = [_rate_table(c, f"{w}.cases[{i}]") for i, c in enumerate(raw_cases)]
    out = {
        "cases": cases,
        "dim": _want(t, "dim", int, w, default=0),
        "dim_margin": _want(t, "dim_margin", int, w, default=10),
        "points": _want(t, "points", int, w, default=161),
        "half_width": _want(t, "half_width", float, w, default=0.0),
    }
    if out["points"] < 9 or out["points"] % 2 == 0:
        raise ConfigError(f"{w}.points: need an odd count >= 9 so the p = 0 row exists")
    _check_unknown(t, out, w)
    return out


_SNAPSHOT_TIMES = (0.0, 0.3, 1.0, 3.0, 10.0)


def _norm_evolution_snapshots(t, w):
    raw_cases = t.get("cases", [{"kappa1": 1.0, "gamma1": 0.1, "gamma2": 0.05,
                                 "beta": "2", "times": list(_SNAPSHOT_TIMES)}])
    if not isinstance(raw_cases, list) or not raw_cases:
        raise ConfigError(f"{w}.cases: expected a nonempty array of case tables")
    cases = []
    for i, c in enumerate(raw_cases):
        wc = f"{w}.cases[{i}]"
        rates = _rate_table(c, wc, extra=("beta", "times"))
        beta = _want(c, "beta", str, wc, required=True)
        try:
            complex(beta)
        except ValueError:
            raise ConfigError(f"{wc}.beta: not a complex literal: {beta!r}") from None
        times = _float_list(c, "times", wc, _SNAPSHOT_TIMES)
        if times[0] != 0.0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError(f"{wc}.times: must start at 0 and increase strictly")
        cases.append({**rates, "beta": beta, "times": times})
    out = {
        "cases": cases,
        "dim": _want(t, "dim", int, w, default=0),
        "dim_margin": _want(t, "dim_margin", int, w, default=10),
        "points": _want(t, "points", int, w, default=121),
        "half_width": _want(t, "half_width", float, w, default=0.0),
        "trajectory_samples": _want(t, "trajectory_samples", int, w, default=120),
        "tol": _want(t, "tol", float, w, default=1e-8),
    }
    if out["trajectory_samples"] < 2:
        raise ConfigError(f"{w}.trajectory_samples: need at least 2")
    _check_unknown(t, out, w)
    return out


def _norm_coherence_tiles(t, w):
    rates = {k: _want(t, k, float, w, default=d)
             for k, d in (("kappa1", 1.0), ("gamma1", 0.1), ("gamma2", 0.05))}
    beta = _want(t, "beta", str, w, default="2")
    try:
        complex(beta)
    except ValueError:
        raise ConfigError(f"{w}.beta: not a complex literal: {beta!r}") from None
    times = _float_list(t, "times", w, _SNAPSHOT_TIMES)
    if times[0] != 0.0 or any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigError(f"{w}.times: must start at 0 and increase strictly")
    out = {
        **rates, "beta": beta, "times": times,
        "dim": _want(t, "dim", int, w, default=0),
        "dim_margin": _want(t, "dim_margin", int, w, default=10),
        "tol": _want(t, "tol", float, w, default=1e-8),
        "display_floor": _want(t, "display_floor", float, w, default=1e-3),
    }
    _check_unknown(t, out, w)
    return out


_FIG5_STATES = ("fock:2", "superpos:2=1,5=1", "fock:5", "cat:2",
                "cat:2:3.141592653589793")


def _norm_negativity_traces(t, w):
    out = {
        "kappa1": _want(t, "kappa1", float, w, default=0.01),
        "gamma1": _want(t, "gamma1", float, w, default=0.009),
        "gamma2": _want(t, "gamma2", float, w, default=1.0),
        "states": _state_text(t, "states", w, _FIG5_STATES),
        "steps": _want(t, "steps", int, w, default=50),
        "periods": _want(t, "periods", float, w, default=0.25),
        "inset_steps": _want(t, "inset_steps", int, w, default=60),
        "inset_periods": _want(t, "inset_periods", float, w, default=0.01),
        "points": _want(t, "points", int, w, default=161),
        "half_width": _want(t, "half_width", float, w, default=0.0),
        "dim": _want(t, "dim", int, w, default=0),
        "tol": _want(t, "tol", float, w, default=1e-8),
    }
    for k in ("steps", "inset_steps"):
        if out[k] < 1:
            raise ConfigError(f"{w}.{k}: must be >= 1")
    for k in ("periods", "inset_periods"):
        if out[k] <= 0:
            raise ConfigError(f"{w}.{k}: must be > 0")
    _check_unknown(t, out, w)
    return out


def _norm_gap_tiles(t, w):
    dims = t.get("dims", [12, 20])
    if (not isinstance(dims, list) or not dims
            or not all(isinstance(d, int) and not isinstance(d, bool) for d in dims)):
        raise ConfigError(f"{w}.dims: expected a nonempty array of integers")
    out = {
        "basis_kappa1": _want(t, "basis_kappa1", float, w, default=0.1),
        "grid_a": _axis(t, "grid_a", w, _DEF_A),
        "grid_b": _axis(t, "grid_b", w, _DEF_B),
        "dims": list(dims),
        "slice_a_star": _want(t, "slice_a_star", float, w, default=33.11),
        "slice_b_star": _want(t, "slice_b_star", float, w, default=0.03),
        "slice_grid_a": _axis(t, "slice_grid_a", w,
                              {"lo": 0.1, "hi": 100.0, "points": 10, "spacing": "log"}),
        "slice_grid_b": _axis(t, "slice_grid_b", w,
                              {"lo": 0.03, "hi": 30.0, "points": 10, "spacing": "log"}),
        "scatter_b": _float_list(t, "scatter_b", w, (0.01, 0.1, 1.0, 10.0, 100.0)),
        "scatter_dim": _want(t, "scatter_dim", int, w, default=20),
        "leading": _want(t, "leading", int, w, default=10),
    }
    if out["basis_kappa1"] <= 0:
        raise ConfigError(f"{w}.basis_kappa1: must be > 0")
    for d in list(dims) + [out["scatter_dim"]]:
        if not 2 <= d <= spectrum.DIM_CAP:
            raise ConfigError(f"{w}: dimension {d} outside 2..{spectrum.DIM_CAP}")
    if out["leading"] < 1:
        raise ConfigError(f"{w}.leading: must be >= 1")
    _check_unknown(t, out, w)
    return out


_TSS_STATE_KINDS = ("fock", "thermal", "coherent")


def _tss_common(t, w, grid_points):
    states = t.get("states", list(_TSS_STATE_KINDS))
    if (not isinstance(states, list) or not states
            or any(s not in _TSS_STATE_KINDS for s in states)):
        raise ConfigError(f"{w}.states: expected a subset of {_TSS_STATE_KINDS}")
    out = {
        "basis_kappa1": _want(t, "basis_kappa1", float, w, default=0.1),
        "states": list(states),
        "epsilon": _want(t, "epsilon", float, w, default=1e-3),
        "t_cap": _want(t, "t_cap", float, w, default=1e5),
        "dim_margin": _want(t, "dim_margin", int, w, default=10),
        "dim_cap": _want(t, "dim_cap", int, w, default=48),
        "tol": _want(t, "tol", float, w, default=1e-8),
    }
    if out["basis_kappa1"] <= 0:
        raise ConfigError(f"{w}.basis_kappa1: must be > 0")
    if out["epsilon"] <= 0:
        raise ConfigError(f"{w}.epsilon: must be > 0")
    return out


def _norm_tss_tiles(t, w):
    out = _tss_common(t, w, 5)
    out["grid_a"] = _axis(t, "grid_a", w, {**_DEF_A, "points": 5})
    out["grid_b"] = _axis(t, "grid_b", w, {**_DEF_B, "points": 5})
    out["energies"] = _float_list(t, "energies", w, (1.0, 3.0, 10.0))
    for e in out["energies"]:
        if e <= 0:
            raise ConfigError(f"{w}.energies: must be positive")
    _check_unknown(t, out, w)
    return out


def _norm_tss_slices(t, w):
    out = _tss_common(t, w, 8)
    out.update({
        "energy": _want(t, "energy", float, w, default=3.0),
        "a_star": _want(t, "a_star", float, w, default=13.18),
        "b_star": _want(t, "b_star", float, w, default=0.08),
        "c_star": _want(t, "c_star", float, w, default=3.63),
        "grid_a": _axis(t, "grid_a", w, _DEF_A),
        "grid_b": _axis(t, "grid_b", w, _DEF_B),
        "factor": _want(t, "factor", float, w, default=15.0),
        "gap_dim": _want(t, "gap_dim", int, w, default=0),
    })
    if out["energy"] <= 0:
        raise ConfigError(f"{w}.energy: must be > 0")
    _check_unknown(t, out, w)
    return out


def _norm_derive_eom(t, w):
    out = {"latex": _want(t, "latex", bool, w, default=True)}
    _check_unknown(t, out, w)
    return out


_NORMALIZERS = {
    "steady_tiles": _norm_steady_tiles,
    "wigner_cuts": _norm_wigner_cuts,
    "evolution_snapshots": _norm_evolution_snapshots,
    "coherence_tiles": _norm_coherence_tiles,
    "negativity_traces": _norm_negativity_traces,
    "gap_tiles": _norm_gap_tiles,
    "tss_tiles": _norm_tss_tiles,
    "tss_slices": _norm_tss_slices,
    "derive_eom": _norm_derive_eom,
}


def normalize_config(mapping):
    if not isinstance(mapping, dict):
        raise ConfigError("config root must be a table")
    kind = _want(mapping, "kind", str, "config", required=True)
    if kind not in KINDS:
        raise ConfigError(f"config.kind: unknown experiment {kind!r}; "
                          f"choose one of {', '.join(KINDS)}")
    schema = _want(mapping, "schema", int, "config", default=1)
    if schema != 1:
        raise ConfigError(f"config.schema: unsupported version {schema}")
    out = _want(mapping, "out", str, "config", default="out")
    workers = _want(mapping, "workers", int, "config", default=1)
    if not 1 <= workers <= 64:
        raise ConfigError("config.workers: must be in 1..64")
    for k in mapping:
        if k not in ("schema", "kind", "out", "workers", kind):
            raise ConfigError(f"config.{k}: unknown key")
    section = mapping.get(kind, {})
    if not isinstance(section, dict):
        raise ConfigError(f"config.{kind}: expected a table")
    options = _NORMALIZERS[kind](section, kind)
    return ExperimentConfig(kind=kind, out=out, workers=workers, options=options)


def parse_config(text):
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        m = re.search(r"at line (\d+), column (\d+)", str(err))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ParseError(str(err).split(" (at line")[0], line, col) from err
    return normalize_config(raw)


def load_config(path):
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# validation pre-flight

def _regime_cells(opts):
    for a in axis_values(opts["grid_a"]):
        for b in axis_values(opts["grid_b"]):
            yield float(a), float(b)


def _state_need(spec):
    """Smallest dimension worth trying for this initial state."""
    if spec.kind == "fock":
        return spec.n + 2
    if spec.kind == "thermal":
        return int(math.ceil(8 * (spec.nbar + 1)))
    if spec.kind == "superposition":
        return max(n for n, _ in spec.amplitudes) + 2
    b = abs(spec.beta)
    return int(math.ceil(b * b + 8 * b + 8))


def _tss_state_spec(kind, energy):
    if kind == "fock":
        n = round(energy)
        if abs(energy - n) > 1e-9:
            raise ConfigError(f"fock initial energy must be an integer, got {energy!r}")
        return core.StateSpec.fock(int(n))
    if kind == "thermal":
        return core.StateSpec.thermal(energy)
    return core.StateSpec.coherent(math.sqrt(energy))


def validate_config(config):
    """Semantic pre-flight: truncation adequacy, degenerate rates, cost."""
    errors, warnings = [], []
    opts = config.options
    kind = config.kind
    tasks, max_dim = 1, 0

    def nhi_for(a, b, basis):
        try:
            p = steadystate.params_from_regime(a, b, basis)
        except InvalidSpec:
            return None, None
        try:
            return p, steadystate.n_hi_analytic(p)
        except QslError:
            return p, None

    if kind in ("wigner_cuts", "evolution_snapshots"):
        for i, case in enumerate(opts["cases"]):
            if case["gamma2"] == 0:
                errors.append(f"{kind}.cases[{i}].gamma2: steady-state experiments "
                              "need gamma2 > 0 (populations divide by it)")
        tasks = len(opts["cases"])
        if not errors:
            for case in opts["cases"]:
                p = SLParams(case["kappa1"], case["gamma1"], case["gamma2"])
                nhi = steadystate.n_hi_analytic(p)
                dim = opts["dim"] or nhi + opts["dim_margin"]
                max_dim = max(max_dim, dim)
                if nhi > dim:
                    warnings.append(f"case ({case['kappa1']:g}, {case['gamma1']:g}, "
                                    f"{case['gamma2']:g}): n_hi = {nhi} exceeds N = {dim}")
    elif kind == "coherence_tiles":
        if opts["gamma2"] == 0:
            errors.append(f"{kind}.gamma2: steady-state experiments need gamma2 > 0")
        else:
            p = SLParams(opts["kappa1"], opts["gamma1"], opts["gamma2"])
            nhi = steadystate.n_hi_analytic(p)
            max_dim = opts["dim"] or nhi + opts["dim_margin"]
            if nhi > max_dim:
                warnings.append(f"n_hi = {nhi} exceeds N = {max_dim}")
        tasks = len(opts["times"])
    elif kind == "negativity_traces":
        tasks = len(opts["states"])
        for text in opts["states"]:
            max_dim = max(max_dim, opts["dim"] or _state_need(core.parse_state_spec(text)))
    elif kind == "steady_tiles":
        cells = list(_regime_cells(opts))
        tasks = len(cells)
        for a, b in cells:
            p, nhi = nhi_for(a, b, opts["basis_kappa1"])
            if nhi is not None:
                max_dim = max(max_dim, nhi + opts["dim_margin"])
    elif kind == "gap_tiles":
        cells = list(_regime_cells(opts))
        tasks = len(cells) * len(opts["dims"]) + len(opts["scatter_b"])
        dim_max = max(opts["dims"])
        max_dim = max(dim_max, opts["scatter_dim"])
        for a, b in cells:
            p, nhi = nhi_for(a, b, opts["basis_kappa1"])
            if nhi is not None and nhi > dim_max:
                warnings.append(f"cell (A = {a:g}, B = {b:g}): n_hi = {nhi} "
                                f"exceeds N = {dim_max}")
    elif kind in ("tss_tiles", "tss_slices"):
        if kind == "tss_tiles":
            cells = list(_regime_cells(opts))
            combos = len(opts["states"]) * len(opts["energies"])
            energies = opts["energies"]
        else:
            cells = ([(opts["a_star"], float(b)) for b in axis_values(opts["grid_b"])]
                     + [(float(a), opts["b_star"]) for a in axis_values(opts["grid_a"])]
                     + [(opts["c_star"] * float(b), float(b))
                        for b in axis_values(opts["grid_b"])])
            combos = len(opts["states"])
            energies = [opts["energy"]]
        try:
            for s in opts["states"]:
                for e in energies:
                    _tss_state_spec(s, e)
        except ConfigError as err:
            errors.append(str(err))
        tasks = len(cells) * combos
        for a, b in cells:
            p, nhi = nhi_for(a, b, opts["basis_kappa1"])
            if nhi is None:
                continue
            need = nhi + opts["dim_margin"]
            max_dim = max(max_dim, min(need, opts["dim_cap"]))
            if need > opts["dim_cap"]:
                warnings.append(f"cell (A = {a:g}, B = {b:g}): needs N = {need}, "
                                f"above the cap {opts['dim_cap']}; it will be skipped")
    return ValidationReport(ok=not errors, errors=tuple(errors), warnings=tuple(warnings),
                            cost={"tasks": tasks, "max_dim": max_dim})


# ---------------------------------------------------------------------------
# shared run helpers

class _Emitter:
    """Collects emitted files, per-point failures, and kind metadata."""

    def __init__(self, out_dir):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.failures = []
        self.meta = {}

    def csv(self, name, header, rows, role, **extra):
        n = write_csv(self.out / name, header, rows)
        entry = {"path": name, "role": role, "rows": n, "columns": list(header)}
        entry.update(extra)
        self.files.append(entry)
        log.info("wrote %s (%d rows)", name, n)

    def text(self, name, content, role, **extra):
        (self.out / name).write_text(content)
        entry = {"path": name, "role": role}
        entry.update(extra)
        self.files.append(entry)
        log.info("wrote %s", name)

    def fail(self, point, error):
        self.failures.append({"point": point, "error": str(error)})
        log.warning("point %s failed: %s", point, error)


def _pool_map(fn, tasks, workers):
    """Order-preserving map; a process pool only when it can actually help."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
        return list(ex.map(fn, tasks))


def _auto_dim(params, margin, state_specs=(), floor=8, cap=80):
    """Truncation covering the steady state and every listed initial state."""
    n = max([steadystate.n_hi_analytic(params) + margin, floor]
            + [_state_need(s) for s in state_specs])
    while n <= cap:
        try:
            for s in state_specs:
                core.make_state(s, n)
            return n
        except QslError:
            n += 6
    raise DimTooLarge(f"no adequate truncation at or below {cap}")


def _steady_radius(ss):
    return math.sqrt(2.0 * (ss.n_hi + 1))


# ---------------------------------------------------------------------------
# experiment drivers

def _run_steady_tiles(cfg, em):
    o = cfg.options
    rows = []
    for a, b in _regime_cells(o):
        c = a / b
        try:
            p = steadystate.params_from_regime(a, b, o["basis_kappa1"])
            nhi = steadystate.n_hi_analytic(p)
            pops = steadystate.pnss_analytic(a, a - b, nhi + o["dim_margin"])
            energy = float(np.arange(pops.size) @ pops)
            rows.append((a, b, c, energy / (b / 2.0), 1))
        except InvalidSpec:
            rows.append((a, b, c, float("nan"), 0))
        except QslError as err:
            em.fail(f"A = {a:g}, B = {b:g}", err)
            rows.append((a, b, c, float("nan"), 0))
    em.csv("tiles.csv", ("A", "B", "C", "value", "valid_flag"), rows, "tiles")
    em.meta.update(basis_kappa1=o["basis_kappa1"],
                   grid_a=o["grid_a"], grid_b=o["grid_b"],
                   value="steady-state energy over the classical B/2",
                   agreement_band=o["agreement_band"])


def _run_wigner_cuts(cfg, em):
    o = cfg.options
    cases_meta = []
    for i, case in enumerate(o["cases"]):
        p = SLParams(case["kappa1"], case["gamma1"], case["gamma2"])
        label = f"case{i}"
        try:
            dim = o["dim"] or _auto_dim(p, o["dim_margin"])
            ss = steadystate.steady_state_numeric(p, dim)
            half = o["half_width"] or _steady_radius(ss) + GRID_MARGIN
            grid = wigner.phase_grid(half_width=half, points=o["points"])
            wg = wigner.wigner_of_rho(ss.rho, grid)
            try:
                guess = steadystate.wigner_guess(p, grid).values
            except BelowBifurcation:
                guess = np.full_like(wg.values, float("nan"))
            ip = o["points"] // 2  # p = 0 row; points is odd
            keep = grid.x >= 0.0
            em.csv(f"cut_{label}.csv", ("x", "w", "w_guess"),
                   [(x, wg.values[j, ip], guess[j, ip])
                    for j, x in enumerate(grid.x) if keep[j]],
                   "wigner_cut", case=label)
            em.csv(f"populations_{label}.csv", ("n", "p"),
                   list(enumerate(ss.populations)), "populations", case=label)
            reg = steadystate.regime(p)
            cases_meta.append({
                "case": label, "kappa1": p.kappa1, "gamma1": p.gamma1,
                "gamma2": p.gamma2, "A": reg.A, "B": reg.B, "C": reg.C,
                "dim": dim, "n_hi": ss.n_hi, "energy": ss.energy,
                "half_width": half,
                "r_classical": ss.r_classical,
            })
        except QslError as err:
            em.fail(label, err)
    em.meta["cases"] = cases_meta


def _segment_states(params, rho0, times, samples, tol, reference):
    """Integrate through the snapshot times once, collecting observables.

    Returns (trajectory rows, states at each snapshot time).
    """
    rows = []
    snaps = [rho0]
    state = rho0
    target = times[-1] / samples if times[-1] > 0 else 1.0
    t0 = 0.0
    for t1 in times[1:]:
        seg = t1 - t0
        n_sub = max(1, round(seg / target))
        traj = dynamics.evolve(params, state, seg, tol=tol,
                               sample_every=seg / n_sub, reference=reference)
        for k in range(len(traj.times)):
            if k == 0 and t0 > 0.0:
                continue
            rows.append((t0 + traj.times[k],
                         traj.exp_a[k].real, traj.exp_a[k].imag,
                         traj.exp_n[k], traj.exp_pair[k],
                         traj.dtr[k] if traj.dtr is not None else float("nan")))
        state = traj.final_state
        snaps.append(state)
        t0 = t1
    return rows, snaps


def _long_rows(grid):
    for j, x in enumerate(grid.x):
        for k, p in enumerate(grid.p):
            yield (x, p, grid.values[j, k])


def _run_evolution_snapshots(cfg, em):
    o = cfg.options
    cases_meta = []
    for i, case in enumerate(o["cases"]):
        p = SLParams(case["kappa1"], case["gamma1"], case["gamma2"])
        beta = complex(case["beta"])
        times = case["times"]
        label = f"case{i}"
        try:
            spec = core.StateSpec.coherent(beta)
            dim = o["dim"] or _auto_dim(p, o["dim_margin"], (spec,))
            ss = steadystate.steady_state_numeric(p, dim)
            rho0 = core.make_state(spec, dim)
            half = o["half_width"] or max(abs(beta) * math.sqrt(2.0),
                                          _steady_radius(ss)) + GRID_MARGIN
            grid = wigner.phase_grid(half_width=half, points=o["points"])
            rows, snaps = _segment_states(p, rho0, times, o["trajectory_samples"],
                                          o["tol"], ss.rho)
            em.csv(f"trajectory_{label}.csv",
                   ("t", "re_a", "im_a", "n", "pair", "dtr"), rows,
                   "trajectory", case=label)
            for j, state in enumerate(snaps):
                wg = wigner.wigner_of_rho(state, grid)
                em.csv(f"snapshot_{label}_t{j}.csv", ("x", "p", "w"),
                       _long_rows(wg), "wigner_snapshot", case=label,
                       time=times[j], peak=float(np.max(np.abs(wg.values))))
            em.csv(f"classical_{label}.csv", ("t", "re_alpha", "im_alpha", "r", "theta"),
                   [(cs.t, cs.alpha.real, cs.alpha.imag, cs.r, cs.theta)
                    for cs in dynamics.classical_trajectory(p, beta, times[-1], o["tol"])],
                   "classical_trajectory", case=label)
            cases_meta.append({
                "case": label, "kappa1": p.kappa1, "gamma1": p.gamma1,
                "gamma2": p.gamma2, "beta": case["beta"], "times": times,
                "dim": dim, "n_hi": ss.n_hi, "steady_energy": ss.energy,
                "r_classical": ss.r_classical, "half_width": half,
                "points": o["points"],
            })
        except QslError as err:
            em.fail(label, err)
    em.meta["cases"] = cases_meta


def _run_coherence_tiles(cfg, em):
    o = cfg.options
    p = SLParams(o["kappa1"], o["gamma1"], o["gamma2"])
    beta = complex(o["beta"])
    spec = core.StateSpec.coherent(beta)
    dim = o["dim"] or _auto_dim(p, o["dim_margin"], (spec,))
    ss = steadystate.steady_state_numeric(p, dim)
    rho0 = core.make_state(spec, dim)
    _, snaps = _segment_states(p, rho0, o["times"], max(len(o["times"]), 2),
                               o["tol"], None)
    for j, state in enumerate(snaps):
        dev = dynamics.coherence_deviation(state, ss.rho)
        em.csv(f"deviation_t{j}.csv", ("m", "n", "value"),
               [(m, n, dev[m, n]) for m in range(dim) for n in range(dim)],
               "coherence_deviation", time=o["times"][j])
    em.meta.update(kappa1=o["kappa1"], gamma1=o["gamma1"], gamma2=o["gamma2"],
                   beta=o["beta"], times=o["times"], dim=dim, n_hi=ss.n_hi,
                   display_floor=o["display_floor"])


def _neg_trace(task):
    """One state's negativity trace; returns (rows, dim, half) or an error string."""
    (k1, g1, g2, text, dim_opt, points, half_opt, steps, periods, tol) = task
    try:
        p = SLParams(k1, g1, g2)
        spec = core.parse_state_spec(text)
        if dim_opt:
            dim = dim_opt
        elif g2 > 0:
            dim = _auto_dim(p, 6, (spec,))
        else:
            dim = max(_state_need(spec), 8)
        rho0 = core.make_state(spec, dim)
        energy = float(np.real(np.diag(rho0)) @ np.arange(dim))
        half = half_opt or math.sqrt(2.0 * (energy + 1.0)) + GRID_MARGIN
        grid = wigner.phase_grid(half_width=half, points=points)
        t_end = periods * 2.0 * math.pi
        traj = dynamics.evolve(p, rho0, t_end, tol=tol,
                               sample_every=t_end / steps, state_stride=1)
        rows = []
        for t, state in zip(traj.state_times, traj.states):
            rep = wigner.negative_volume(wigner.wigner_of_rho(state, grid))
            rows.append((t, rep.volume))
        return rows, dim, half
    except QslError as err:
        return str(err)


def _run_negativity_traces(cfg, em):
    o = cfg.options
    states_meta = []
    base = (o["kappa1"], o["gamma1"], o["gamma2"])
    specs = [core.parse_state_spec(s) for s in o["states"]]
    tasks = []
    for text in o["states"]:
        tasks.append(base + (text, o["dim"], o["points"], o["half_width"],
                             o["steps"], o["periods"], o["tol"]))
        tasks.append(base + (text, o["dim"], o["points"], o["half_width"],
                             o["inset_steps"], o["inset_periods"], o["tol"]))
    results = _pool_map(_neg_trace, tasks, cfg.workers)
    for i, spec in enumerate(specs):
        label = _slug(spec.label())
        main, inset = results[2 * i], results[2 * i + 1]
        if isinstance(main, str):
            em.fail(o["states"][i], main)
            continue
        rows, dim, half = main
        em.csv(f"trace_{label}.csv", ("t", "V"), rows, "negativity_trace",
               state=o["states"][i])
        entry = {"state": o["states"][i], "label": label, "dim": dim,
                 "half_width": half, "v_initial": rows[0][1]}
        if isinstance(inset, str):
            em.fail(o["states"][i] + " (inset)", inset)
        else:
            em.csv(f"inset_{label}.csv", ("t", "V"), inset[0],
                   "negativity_trace_inset", state=o["states"][i])
        states_meta.append(entry)
    em.meta.update(kappa1=o["kappa1"], gamma1=o["gamma1"], gamma2=o["gamma2"],
                   periods=o["periods"], inset_periods=o["inset_periods"],
                   states=states_meta)


_GAP_HEADER = ("A", "B", "C", "value", "valid_flag", "n_hi", "valid", "N")


def _gap_rows(tiles):
    rows = []
    for t in tiles:
        feasible = math.isfinite(t.delta)
        rows.append((t.a, t.b, t.c, t.delta, 1 if feasible else 0,
                     t.n_hi if t.n_hi is not None else float("nan"),
                     1 if t.valid else 0, t.dim))
    return rows


def _run_gap_tiles(cfg, em):
    o = cfg.options
    basis = o["basis_kappa1"]
    cells = list(_regime_cells(o))

    nhi_rows = []
    for a, b in cells:
        try:
            p = steadystate.params_from_regime(a, b, basis)
            nhi_rows.append((a, b, a / b, steadystate.n_hi_analytic(p), 1))
        except InvalidSpec:
            nhi_rows.append((a, b, a / b, float("nan"), 0))
    em.csv("nhi_tiles.csv", ("A", "B", "C", "n_hi", "valid_flag"), nhi_rows, "n_hi_tile")

    for dim in o["dims"]:
        tiles = spectrum.gap_sweep(cells, dim, basis, workers=cfg.workers)
        em.csv(f"gap_tiles_dim{dim}.csv", _GAP_HEADER, _gap_rows(tiles),
               "gap_tile", dim=dim)

    slice_b_pts = [(o["slice_a_star"], float(b)) for b in axis_values(o["slice_grid_b"])]
    slice_a_pts = [(float(a), o["slice_b_star"]) for a in axis_values(o["slice_grid_a"])]
    for dim in o["dims"]:
        em.csv(f"gap_slice_a_dim{dim}.csv", _GAP_HEADER,
               _gap_rows(spectrum.gap_sweep(slice_a_pts, dim, basis, workers=cfg.workers)),
               "gap_slice_a", dim=dim, fixed_b=o["slice_b_star"])
        em.csv(f"gap_slice_b_dim{dim}.csv", _GAP_HEADER,
               _gap_rows(spectrum.gap_sweep(slice_b_pts, dim, basis, workers=cfg.workers)),
               "gap_slice_b", dim=dim, fixed_a=o["slice_a_star"])

    scatter = []
    for b in o["scatter_b"]:
        try:
            p = steadystate.params_from_regime(b, b, basis)  # C = A/B = 1
            res = spectrum.spectrum(p, o["scatter_dim"])
            nhi = res.n_hi if res.n_hi is not None else float("nan")
            for j in range(min(o["leading"], len(res.eigenvalues))):
                lam = res.eigenvalues[j]
                scatter.append((b, j, lam.real, lam.imag, nhi,
                                1 if res.valid else 0, o["scatter_dim"]))
        except QslError as err:
            em.fail(f"scatter B = {b:g}", err)
    em.csv("spectrum_scatter.csv",
           ("B", "j", "re_lambda", "im_lambda", "n_hi", "valid", "N"),
           scatter, "spectrum_scatter", c_fixed=1.0)
    em.meta.update(basis_kappa1=basis, dims=o["dims"],
                   slice_a_star=o["slice_a_star"], slice_b_star=o["slice_b_star"],
                   scatter_b=o["scatter_b"], leading=o["leading"])


def _tss_cell(task):
    """T_ss for one (regime point, initial state); returns a row dict."""
    (a, b, basis, kind, energy, eps, margin, cap, t_cap, tol) = task
    out = {"a": a, "b": b, "t": float("nan"), "converged": 0, "error": None}
    try:
        p = steadystate.params_from_regime(a, b, basis)
    except InvalidSpec:
        return out  # infeasible corner, not an error
    try:
        spec = _tss_state_spec(kind, energy)
        need = max(steadystate.n_hi_analytic(p) + margin, _state_need(spec))
        if need > cap:
            out["error"] = f"needs N = {need}, above the cap {cap}"
            return out
        ss = steadystate.steady_state_numeric(p, need)
        rho0 = core.make_state(spec, need)
        out["t"] = dynamics.steady_state_time(p, rho0, eps, ss.rho, tol=tol,
                                              t_cap=t_cap)
        out["converged"] = 1
    except NotReached as err:
        out["error"] = str(err)
    except QslError as err:
        out["error"] = str(err)
    return out


def _tss_tasks_to_rows(em, tasks, results, point_label):
    rows = []
    for task, res in zip(tasks, results):
        if res["error"] is not None:
            em.fail(point_label(task), res["error"])
        rows.append((res["a"], res["b"], res["t"], res["converged"]))
    return rows


def _run_tss_tiles(cfg, em):
    o = cfg.options
    cells = list(_regime_cells(o))
    combos_meta = []
    for kind in o["states"]:
        for energy in o["energies"]:
            tasks = [(a, b, o["basis_kappa1"], kind, energy, o["epsilon"],
                      o["dim_margin"], o["dim_cap"], o["t_cap"], o["tol"])
                     for a, b in cells]
            results = _pool_map(_tss_cell, tasks, cfg.workers)
            name = f"tss_{kind}_e{energy:g}.csv"
            rows = _tss_tasks_to_rows(
                em, tasks, results,
                lambda t: f"{kind} E = {energy:g} at A = {t[0]:g}, B = {t[1]:g}")
            em.csv(name, ("A", "B", "T_ss", "converged_flag"), rows,
                   "tss_tile", state=kind, energy=energy)
            combos_meta.append({"state": kind, "energy": energy, "path": name})
    em.meta.update(basis_kappa1=o["basis_kappa1"], epsilon=o["epsilon"],
                   grid_a=o["grid_a"], grid_b=o["grid_b"], combos=combos_meta)


def _slice_gap(a, b, basis, gap_dim, margin):
    try:
        p = steadystate.params_from_regime(a, b, basis)
        dim = gap_dim or min(steadystate.n_hi_analytic(p) + margin, spectrum.DIM_CAP)
        return spectrum.spectrum(p, dim).gap
    except QslError:
        return float("nan")


def _run_tss_slices(cfg, em):
    o = cfg.options
    basis, energy = o["basis_kappa1"], o["energy"]
    slices = (
        ("slice_a.csv", "tss_slice_fixed_a",
         [(o["a_star"], float(b)) for b in axis_values(o["grid_b"])]),
        ("slice_b.csv", "tss_slice_fixed_b",
         [(float(a), o["b_star"]) for a in axis_values(o["grid_a"])]),
        ("slice_c.csv", "tss_slice_fixed_c",
         [(o["c_star"] * float(b), float(b)) for b in axis_values(o["grid_b"])]),
    )
    for name, role, points in slices:
        tasks = [(a, b, basis, kind, energy, o["epsilon"], o["dim_margin"],
                  o["dim_cap"], o["t_cap"], o["tol"])
                 for a, b in points for kind in o["states"]]
        results = _pool_map(_tss_cell, tasks, cfg.workers)
        rows = []
        for i, (a, b) in enumerate(points):
            gap = _slice_gap(a, b, basis, o["gap_dim"], o["dim_margin"])
            for k, kind in enumerate(o["states"]):
                res = results[i * len(o["states"]) + k]
                if res["error"] is not None:
                    em.fail(f"{role} {kind} at A = {a:g}, B = {b:g}", res["error"])
                rows.append((a, b, a / b, kind, res["t"], res["converged"],
                             gap, o["factor"] / gap if gap > 0 else float("nan")))
        em.csv(name, ("A", "B", "C", "state", "T_ss", "converged_flag",
                      "gap", "scaled_inverse_gap"), rows, role)
    em.meta.update(basis_kappa1=basis, energy=energy, factor=o["factor"],
                   epsilon=o["epsilon"], a_star=o["a_star"], b_star=o["b_star"],
                   c_star=o["c_star"])


def _run_derive_eom(cfg, em):
    op = moyal.derive_qsl_operator()
    em.text("eom.txt", moyal.render_text(op) + "\n", "eom_text")
    em.text("eom.json",
            json.dumps(moyal.render_json(op), indent=2, sort_keys=True) + "\n",
            "eom_terms")
    if cfg.options["latex"]:
        em.text("eom.tex", moyal.render_latex(op) + "\n", "eom_latex")
    em.meta["term_count"] = len(moyal.render_json(op)["generator"])


_RUNNERS = {
    "steady_tiles": _run_steady_tiles,
    "wigner_cuts": _run_wigner_cuts,
    "evolution_snapshots": _run_evolution_snapshots,
    "coherence_tiles": _run_coherence_tiles,
    "negativity_traces": _run_negativity_traces,
    "gap_tiles": _run_gap_tiles,
    "tss_tiles": _run_tss_tiles,
    "tss_slices": _run_tss_slices,
    "derive_eom": _run_derive_eom,
}


def run_experiment(config, out_dir=None, workers=None):
    """Execute one experiment; returns the manifest dict (also written to disk)."""
    if workers is not None:
        config = ExperimentConfig(config.kind, config.out, workers, config.options)
    report = validate_config(config)
    if not report.ok:
        raise ConfigError("; ".join(report.errors))
    out = Path(out_dir if out_dir is not None else config.out)
    em = _Emitter(out)
    log.info("running %s into %s", config.kind, out)
    _RUNNERS[config.kind](config, em)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "kind": config.kind,
        "config_hash": config_hash(config.data),
        "config": config.data,
        "files": em.files,
        "failures": em.failures,
        "meta": em.meta,
    }
    # Strict JSON: nan/inf belong in the CSVs, never in the manifest.
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True, allow_nan=False,
                   default=_json_default) + "\n")
    return manifest


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    raise TypeError(f"not JSON-serializable: {type(v).__name__}")
