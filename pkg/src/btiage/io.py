"""File formats: run configs, trace / ensemble / fit-input CSVs.

Reals are written with 17 significant digits so a write-then-read cycle is
bit-exact. CSV outputs start with ``# key=value`` provenance lines; dropping
every line that starts with ``#`` leaves plain CSV.
"""
from __future__ import annotations

import csv
import hashlib
import io
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .analysis import DegradationTrace
from .models import DeviceParams
from .trapsim import EnsembleGenSpec, Trap, TrapEnsemble, gen_ensemble
from .waveform import AcStressSpec, DcStressSpec, LogGrid, Pattern, build_ac_waveform, build_dc_waveform

TRACE_HEADER = ("t_wall_s", "t_cum_stress_s", "delta_vt_v", "phase")
ENSEMBLE_HEADER = ("tau_c_ref_s", "tau_e_ref_s", "eta_v", "ea_capture_ev", "ea_emission_ev",
                   "field_threshold_mvcm")
FIT_SCHEMAS = {
    "powerlaw": ("xi_mvcm", "t_s", "delta_vt_v"),
    "duty": ("duty", "delta_vt_v"),
    "relax": ("xi_ratio", "fraction"),
}


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SchemaError(ValueError):
    pass


def fmt(x) -> str:
    return format(float(x), ".17g")


def digest(*chunks: bytes) -> str:
    h = hashlib.sha256()
    for c in chunks:
        h.update(c)
    return h.hexdigest()[:16]


# --- config -------------------------------------------------------------------

_GRID = {"grid_t_min_s": float, "grid_t_max_s": float, "grid_points_per_decade": int}

SCHEMA = {
    "device": {"eot_nm": float, "v_t0_v": float, "c_ox_f_cm2": float, "temperature_k": float},
    "waveform": {
        "kind": str, "v_stress_v": float, "v_read_v": float, "read_pulse_width_s": float,
        "stress_duration_s": float, "relax_duration_s": float, "read_to_relax_delay_s": float,
        "frequency_hz": float, "duty": float, "pattern": str, "target_cumulative_stress_s": float,
        "v_relax_v": float, **_GRID,
    },
    "ensemble": {
        "file": str, "seed": int, "n_traps": int, "tau_c_min_s": float, "tau_c_max_s": float,
        "tau_e_min_s": float, "tau_e_max_s": float, "total_eta_v": float,
        "field_threshold_min_mvcm": float, "field_threshold_max_mvcm": float,
        "ea_capture_ev": float, "ea_emission_ev": float, "reference_temperature_k": float,
        "reference_field_mvcm": float,
    },
    "simulate": {"temperature_k": float, "workers": int, **_GRID},
    "fit": {"kind": str, "trim_fraction": float},
    "ttf": {"tolerance_mv": float},
}


@dataclass
class RunConfig:
    sections: dict[str, dict]
    lines: dict[tuple[str, str], int]
    source: Path | None = None
    raw: bytes = b""
    warnings: list[str] = field(default_factory=list)

    def has(self, section):
        return section in self.sections

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def require(self, section, key):
        if section not in self.sections:
            raise ConfigError(f"missing [{section}] section")
        if key not in self.sections[section]:
            raise ConfigError(f"[{section}] is missing required key '{key}'")
        return self.sections[section][key]

    def line_of(self, section, key):
        return self.lines.get((section, key))

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.source is not None:
            p = self.source.parent / p
        return p

    @property
    def hash(self) -> str:
        chunks = [self.raw]
        f = self.get("ensemble", "file")
        if f is not None and self.resolve(f).exists():
            chunks.append(self.resolve(f).read_bytes())
        return digest(*chunks)


def parse_config(text: str, source: Path | None = None, strict: bool = True) -> RunConfig:
    """Parse ``[section]`` / ``key = value`` text; ``#`` and ``;`` start comments."""
    sections: dict[str, dict] = {}
    lines: dict[tuple[str, str], int] = {}
    warnings = []
    current = None
    for n, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw_line.strip()!r}", n)
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"unknown section [{current}]", n)
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", n)
            sections[current] = {}
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw_line.strip()!r}", n)
        if current is None:
            raise ConfigError("key outside of any section", n)
        key, value = (part.strip() for part in line.split("=", 1))
        kind = SCHEMA[current].get(key)
        if kind is None:
            msg = f"unknown key '{key}' in [{current}]"
            if strict:
                raise ConfigError(msg, n)
            warnings.append(f"line {n}: {msg}")
            continue
        if key in sections[current]:
            raise ConfigError(f"duplicate key '{key}' in [{current}]", n)
        try:
            sections[current][key] = kind(value)
        except ValueError:
            raise ConfigError(f"cannot read {key} = {value!r} as {kind.__name__}", n) from None
        lines[(current, key)] = n
    return RunConfig(sections, lines, source, text.encode(), warnings)


def load_config(path, strict=True) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), path, strict)


def _grid(cfg: RunConfig, section: str) -> LogGrid | None:
    if cfg.get(section, "grid_t_min_s") is None:
        return None
    return LogGrid(
        cfg.require(section, "grid_t_min_s"),
        cfg.require(section, "grid_t_max_s"),
        cfg.get(section, "grid_points_per_decade", 10),
    )


def device_from_config(cfg: RunConfig) -> DeviceParams:
    return DeviceParams(
        eot=cfg.require("device", "eot_nm"),
        v_t0=cfg.require("device", "v_t0_v"),
        c_ox=cfg.get("device", "c_ox_f_cm2", 1.5e-6),
        temperature=cfg.require("device", "temperature_k"),
    )


def waveform_from_config(cfg: RunConfig):
    kind = cfg.require("waveform", "kind")
    grid = _grid(cfg, "waveform")
    if kind == "dc":
        if grid is None:
            raise ConfigError("[waveform] dc needs grid_t_min_s / grid_t_max_s")
        return build_dc_waveform(DcStressSpec(
            v_stress=cfg.require("waveform", "v_stress_v"),
            v_read=cfg.get("waveform", "v_read_v", -0.5),
            stress_duration=cfg.require("waveform", "stress_duration_s"),
            relax_duration=cfg.get("waveform", "relax_duration_s", 0.0),
            sample_grid=grid,
            read_pulse_width=cfg.get("waveform", "read_pulse_width_s", 1e-3),
            read_to_relax_delay=cfg.get("waveform", "read_to_relax_delay_s", 1e-3),
        ))
    if kind == "ac":
        try:
            pattern = Pattern(cfg.get("waveform", "pattern", Pattern.RELAX_STRESS_MEASURE.value))
        except ValueError:
            raise ConfigError(f"unknown pattern {cfg.get('waveform', 'pattern')!r}",
                              cfg.line_of("waveform", "pattern")) from None
        return build_ac_waveform(AcStressSpec(
            v_stress=cfg.require("waveform", "v_stress_v"),
            frequency=cfg.require("waveform", "frequency_hz"),
            duty=cfg.require("waveform", "duty"),
            target_cumulative_stress=cfg.require("waveform", "target_cumulative_stress_s"),
            sample_grid=grid,
            pattern=pattern,
            v_relax=cfg.get("waveform", "v_relax_v", 0.0),
            v_read=cfg.get("waveform", "v_read_v", -0.5),
            read_pulse_width=cfg.get("waveform", "read_pulse_width_s", 1e-3),
        ))
    raise ConfigError(f"unknown waveform kind {kind!r} (expected dc or ac)", cfg.line_of("waveform", "kind"))


def gen_spec_from_config(cfg: RunConfig) -> EnsembleGenSpec:
    d = EnsembleGenSpec()
    g = lambda k, default: cfg.get("ensemble", k, default)
    return EnsembleGenSpec(
        n_traps=g("n_traps", d.n_traps),
        tau_c_range=(g("tau_c_min_s", d.tau_c_range[0]), g("tau_c_max_s", d.tau_c_range[1])),
        tau_e_range=(g("tau_e_min_s", d.tau_e_range[0]), g("tau_e_max_s", d.tau_e_range[1])),
        total_eta=g("total_eta_v", d.total_eta),
        field_threshold_range=(g("field_threshold_min_mvcm", 0.0), g("field_threshold_max_mvcm", 0.0)),
        ea_capture=g("ea_capture_ev", d.ea_capture),
        ea_emission=g("ea_emission_ev", d.ea_emission),
        reference_temperature=g("reference_temperature_k", d.reference_temperature),
        reference_field=g("reference_field_mvcm", d.reference_field),
    )


def ensemble_from_config(cfg: RunConfig, seed: int | None = None) -> TrapEnsemble:
    if not cfg.has("ensemble"):
        raise ConfigError("missing [ensemble] section")
    f = cfg.get("ensemble", "file")
    if f is not None:
        ens = read_ensemble_csv(
            cfg.resolve(f),
            reference_temperature=cfg.get("ensemble", "reference_temperature_k", EnsembleGenSpec().reference_temperature),
            reference_field=cfg.get("ensemble", "reference_field_mvcm", 0.0),
        )
        return TrapEnsemble(ens.traps, ens.reference_temperature, ens.reference_field,
                            seed if seed is not None else cfg.get("ensemble", "seed"))
    seed = seed if seed is not None else cfg.get("ensemble", "seed", 0)
    return gen_ensemble(gen_spec_from_config(cfg), seed)


# --- CSV ----------------------------------------------------------------------


def _header_lines(meta: dict) -> str:
    out = [f"# tool=btiage {__version__}"]
    for k, v in meta.items():
        out.append(f"# {k}={v}")
    return "\n".join(out) + "\n"


def _split_comments(text: str):
    meta = {}
    body = []
    for line in text.splitlines(keepends=True):
        if line.startswith("#"):
            item = line[1:].strip()
            if "=" in item:
                k, v = item.split("=", 1)
                meta[k.strip()] = v.strip()
        else:
            body.append(line)
    return meta, "".join(body)


def write_trace_csv(path, trace: DegradationTrace, meta: dict | None = None):
    buf = io.StringIO()
    buf.write(_header_lines(meta or {}))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for tw, tc, v, ph in zip(trace.t_wall, trace.t_cum_stress, trace.delta_vt, trace.phase):
        w.writerow((fmt(tw), fmt(tc), fmt(v), ph.value))
    Path(path).write_text(buf.getvalue())


def read_trace_csv(path) -> DegradationTrace:
    meta, body = _split_comments(Path(path).read_text())
    rows = list(csv.reader(io.StringIO(body)))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise SchemaError(f"{path}: trace header must be {','.join(TRACE_HEADER)}")
    data = rows[1:]
    if not data:
        raise SchemaError(f"{path}: trace has no samples")
    if "relax_start_s" in meta:
        meta["relax_start_s"] = float(meta["relax_start_s"])
    meta.setdefault("source", str(path))
    return DegradationTrace(
        [float(r[0]) for r in data],
        [float(r[1]) for r in data],
        [float(r[2]) for r in data],
        [r[3] for r in data],
        meta,
    )


def write_ensemble_csv(path, ensemble: TrapEnsemble, meta: dict | None = None):
    buf = io.StringIO()
    buf.write(_header_lines(meta or {}))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ENSEMBLE_HEADER)
    for t in ensemble.traps:
        w.writerow(tuple(fmt(v) for v in (t.tau_c_ref, t.tau_e_ref, t.eta, t.ea_capture,
                                          t.ea_emission, t.field_threshold)))
    Path(path).write_text(buf.getvalue())


def read_ensemble_csv(path, reference_temperature=298.15, reference_field=0.0) -> TrapEnsemble:
    meta, body = _split_comments(Path(path).read_text())
    rows = list(csv.reader(io.StringIO(body)))
    if not rows or tuple(rows[0]) != ENSEMBLE_HEADER:
        raise SchemaError(f"{path}: ensemble header must be {','.join(ENSEMBLE_HEADER)}")
    traps = tuple(Trap(*(float(x) for x in r)) for r in rows[1:] if r)
    seed = meta.get("seed")
    seed = int(seed) if seed not in (None, "", "None") else None
    return TrapEnsemble(traps, reference_temperature, reference_field, seed)


def read_columns(path, required, warn=None) -> dict[str, list[float]]:
    """Named float columns from a CSV; extra columns are ignored with a warning."""
    meta, body = _split_comments(Path(path).read_text())
    reader = csv.reader(io.StringIO(body))
    rows = [r for r in reader if r]
    if not rows:
        return {c: [] for c in required}
    header = [h.strip() for h in rows[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {', '.join(missing)}")
    extra = [h for h in header if h not in required]
    if extra and warn is not None:
        warn(f"warning: ignoring unknown columns {', '.join(extra)}")
    idx = {c: header.index(c) for c in required}
    return {c: [float(r[idx[c]]) for r in rows[1:]] for c in required}


def write_columns(path, header, rows, meta: dict | None = None):
    buf = io.StringIO()
    buf.write(_header_lines(meta or {}))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(tuple(fmt(v) for v in r))
    Path(path).write_text(buf.getvalue())


def stderr(msg):
    print(msg, file=sys.stderr)
