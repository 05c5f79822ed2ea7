"""Two-state charge-trap ensemble simulator.

Every trap is an independent empty/filled system. During stress (and only
when the oxide field reaches the trap's accessibility threshold) it fills
with time constant tau_c; during relax it empties with tau_e; reads freeze
it. Each segment is applied with the exact first-order update

    p <- p_inf + (p - p_inf) * exp(-dt / tau_eff)

and whole AC cycles are composed into the affine map p <- a*p + b, whose
n-fold iterate is p* + a^n (p - p*) with p* = b / (1 - a).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .analysis import DegradationTrace
from .models import DeviceParams, K_B_EV, normalized_field
from .waveform import LogGrid, Phase, Position, Waveform, WaveformError

T_ROOM = 298.15


@dataclass(frozen=True)
class Trap:
    tau_c_ref: float  # s, at reference field / temperature
    tau_e_ref: float  # s, at relax bias / reference temperature
    eta: float  # V, |dVt| contribution when filled
    ea_capture: float = 0.1  # eV
    ea_emission: float = 0.1  # eV
    field_threshold: float = 0.0  # MV/cm

    def __post_init__(self):
        if not (self.tau_c_ref > 0 and self.tau_e_ref > 0):
            raise ValueError("time constants must be > 0")
        if self.eta < 0 or self.ea_capture < 0 or self.ea_emission < 0 or self.field_threshold < 0:
            raise ValueError("eta, activation energies and field_threshold must be >= 0")


@dataclass(frozen=True)
class TrapEnsemble:
    traps: tuple[Trap, ...]
    reference_temperature: float = T_ROOM
    reference_field: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if not self.traps:
            raise ValueError("ensemble must contain at least one trap")
        object.__setattr__(self, "traps", tuple(self.traps))

    def __len__(self):
        return len(self.traps)

    @cached_property
    def arrays(self) -> dict[str, np.ndarray]:
        cols = ("tau_c_ref", "tau_e_ref", "eta", "ea_capture", "ea_emission", "field_threshold")
        return {c: np.array([getattr(t, c) for t in self.traps], dtype=float) for c in cols}

    @property
    def saturation(self) -> float:
        return math.fsum(t.eta for t in self.traps)

    def accessible_saturation(self, xi) -> float:
        """Sum of eta over traps reachable at field ``xi``."""
        return math.fsum(t.eta for t in self.traps if abs(xi) >= t.field_threshold)

    def __add__(self, other: "TrapEnsemble") -> "TrapEnsemble":
        return replace(self, traps=self.traps + other.traps)


@dataclass(frozen=True)
class EnsembleGenSpec:
    n_traps: int = 400
    tau_c_range: tuple[float, float] = (1e-4, 1e2)
    tau_e_range: tuple[float, float] = (1e-3, 1e3)
    total_eta: float = 0.2
    field_threshold_range: tuple[float, float] = (0.0, 0.0)
    ea_capture: float = 0.1
    ea_emission: float = 0.1
    reference_temperature: float = T_ROOM
    reference_field: float = 0.0

    def __post_init__(self):
        if self.n_traps < 1:
            raise ValueError("n_traps must be >= 1")
        for name in ("tau_c_range", "tau_e_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        lo, hi = self.field_threshold_range
        if not 0 <= lo <= hi:
            raise ValueError(f"field_threshold_range must satisfy 0 <= lo <= hi, got ({lo}, {hi})")
        if self.total_eta < 0 or self.ea_capture < 0 or self.ea_emission < 0:
            raise ValueError("total_eta and activation energies must be >= 0")


def _log_uniform(u, lo, hi):
    if lo == hi:
        return np.full_like(u, lo)
    return np.exp(math.log(lo) + u * (math.log(hi) - math.log(lo)))


def gen_ensemble(spec: EnsembleGenSpec, seed: int) -> TrapEnsemble:
    """Sample an ensemble with a Philox counter-based generator.

    Stream order: n_traps uniforms for tau_c, then n_traps for tau_e, then
    n_traps for the field thresholds. Each trap gets total_eta / n_traps.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    n = spec.n_traps
    tau_c = _log_uniform(rng.random(n), *spec.tau_c_range)
    tau_e = _log_uniform(rng.random(n), *spec.tau_e_range)
    lo, hi = spec.field_threshold_range
    thr = np.full(n, lo) if lo == hi else lo + rng.random(n) * (hi - lo)
    eta = spec.total_eta / n
    traps = tuple(
        Trap(float(c), float(e), eta, spec.ea_capture, spec.ea_emission, float(f))
        for c, e, f in zip(tau_c, tau_e, thr)
    )
    return TrapEnsemble(traps, spec.reference_temperature, spec.reference_field, seed)


def effective_rates(trap: Trap, phase: Phase, xi_ox_prime, temperature, reference_temperature=T_ROOM):
    """(tau_c, tau_e) in seconds for one trap; math.inf marks a disabled path."""
    if not temperature > 0:
        raise ValueError("temperature must be > 0 K")
    inv = 1.0 / temperature - 1.0 / reference_temperature
    if phase is Phase.STRESS:
        if abs(xi_ox_prime) < trap.field_threshold:
            return math.inf, math.inf
        return trap.tau_c_ref * math.exp(trap.ea_capture / K_B_EV * inv), math.inf
    if phase is Phase.RELAX:
        return math.inf, trap.tau_e_ref * math.exp(trap.ea_emission / K_B_EV * inv)
    return math.inf, math.inf


@dataclass
class OccupancyState:
    p: np.ndarray
    t_wall: float = 0.0
    t_cum_stress: float = 0.0

    @classmethod
    def empty(cls, ensemble: TrapEnsemble) -> "OccupancyState":
        return cls(np.zeros(len(ensemble)))


class _Rates:
    """Capture / emission rates (1/s, 0 = disabled) per trap, per segment kind."""

    def __init__(self, arrays, device: DeviceParams, temperature, t_ref):
        if not temperature > 0:
            raise ValueError("temperature must be > 0 K")
        self.a = arrays
        self.device = device
        inv = 1.0 / temperature - 1.0 / t_ref
        self.cap = 1.0 / (arrays["tau_c_ref"] * np.exp(arrays["ea_capture"] / K_B_EV * inv))
        self.em = 1.0 / (arrays["tau_e_ref"] * np.exp(arrays["ea_emission"] / K_B_EV * inv))
        self.zero = np.zeros_like(self.cap)
        self._cache = {}

    def for_segment(self, seg):
        key = (seg.phase, seg.v_gs)
        if key not in self._cache:
            if seg.phase is Phase.STRESS:
                xi = normalized_field(seg.v_gs, self.device.v_t0, self.device.eot)
                cap = np.where(abs(xi) >= self.a["field_threshold"], self.cap, 0.0)
                self._cache[key] = (cap, self.zero)
            elif seg.phase is Phase.RELAX:
                self._cache[key] = (self.zero, self.em)
            else:
                self._cache[key] = (self.zero, self.zero)
        return self._cache[key]


def _apply(p, cap, em, dt):
    """Exact update over dt; traps with no active path keep p."""
    total = cap + em
    decay = np.exp(-dt * total)
    gain = -np.expm1(-dt * total)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_inf = np.where(total > 0, cap / total, 0.0)
    return np.clip(p * decay + p_inf * gain, 0.0, 1.0)


def _cycle_map(segments, rates):
    """(log_a, b) such that one cycle maps p -> exp(log_a) * p + b."""
    log_a = None
    b = None
    for seg in segments:
        cap, em = rates.for_segment(seg)
        x = seg.duration * (cap + em)
        decay = np.exp(-x)
        with np.errstate(invalid="ignore", divide="ignore"):
            p_inf = np.where(cap + em > 0, cap / (cap + em), 0.0)
        gain = p_inf * -np.expm1(-x)
        if b is None:
            log_a, b = -x, gain
        else:
            log_a, b = log_a - x, decay * b + gain
    return log_a, b


def _apply_cycles(p, cycle_map, n):
    log_a, b = cycle_map
    with np.errstate(invalid="ignore", divide="ignore"):
        one_minus_a = -np.expm1(log_a)
        p_fix = np.where(one_minus_a > 0, b / one_minus_a, p)
    out = p_fix + np.exp(n * log_a) * (p - p_fix)
    return np.clip(out, 0.0, 1.0)


def step_segment(state: OccupancyState, ensemble: TrapEnsemble, segment, device: DeviceParams,
                 temperature) -> OccupancyState:
    rates = _Rates(ensemble.arrays, device, temperature, ensemble.reference_temperature)
    cap, em = rates.for_segment(segment)
    stress = segment.duration if segment.phase is Phase.STRESS else 0.0
    return OccupancyState(
        _apply(state.p, cap, em, segment.duration),
        state.t_wall + segment.duration,
        state.t_cum_stress + stress,
    )


class _Runner:
    """Walks a waveform from position to position for a slice of traps."""

    def __init__(self, waveform: Waveform, rates: _Rates):
        self.wf = waveform
        self.rates = rates
        self._maps = {}

    def _partial(self, p, block, j0, dt0, j1, dt1):
        for j in range(j0, min(j1, len(block.segments) - 1) + 1):
            seg = block.segments[j]
            start = dt0 if j == j0 else 0.0
            end = dt1 if j == j1 else seg.duration
            if end > start:
                cap, em = self.rates.for_segment(seg)
                p = _apply(p, cap, em, end - start)
        return p

    def _cycles(self, p, block, n):
        if n <= 0:
            return p
        if n == 1:
            return self._partial(p, block, 0, 0.0, len(block.segments), 0.0)
        key = block.segments
        if key not in self._maps:
            self._maps[key] = _cycle_map(block.segments, self.rates)
        return _apply_cycles(p, self._maps[key], n)

    def advance(self, p, a: Position, b: Position):
        """Occupancy at ``b`` given occupancy ``p`` at ``a`` (a <= b)."""
        blocks = self.wf.blocks
        i, k, j, dt = a.block, a.k, a.j, a.dt
        while True:
            block = blocks[i]
            if i == b.block:
                k1, j1, dt1 = b.k, b.j, b.dt
            else:
                k1, j1, dt1 = block.count, 0, 0.0
            if k1 > k and (j, dt) != (0, 0.0):
                p = self._partial(p, block, j, dt, len(block.segments), 0.0)
                k, j, dt = k + 1, 0, 0.0
            if k1 > k:
                p = self._cycles(p, block, k1 - k)
                k = k1
            if k < block.count:
                p = self._partial(p, block, j, dt, j1, dt1)
            if i == b.block:
                return p
            i, k, j, dt = i + 1, 0, 0, 0.0


def _sample_positions(waveform: Waveform, grid: LogGrid | None):
    if not waveform.blocks:
        return []
    if grid is None:
        pos = [Position(i, 0, 0, 0.0) for i, b in enumerate(waveform.blocks)
               if b.segments[0].phase is Phase.READ and len(b.segments) == 1]
    else:
        times = grid.times()
        if waveform.sample_axis == "stress":
            limit, locate = waveform.total_stress, waveform.locate_stress
        else:
            limit, locate = waveform.duration, waveform.locate_wall
        if times[-1] > limit * (1 + 1e-12):
            raise WaveformError(
                f"sample grid reaches {times[-1]:g} s but the waveform only covers {limit:g} s "
                f"on the {waveform.sample_axis} axis"
            )
        pos = [locate(min(float(t), limit)) for t in times]
    start = Position(0, 0, 0, 0.0)
    end = waveform.end_position()
    pos = [start] + pos + [end]
    out = []
    last = None
    for q in pos:
        key = waveform.wall_time(q)
        if last is None or key > last:
            out.append(q)
            last = key
    return out


def _stage(waveform: Waveform, pos: Position) -> Phase:
    if pos.block > 0 and (pos.k, pos.j, pos.dt) == (0, 0, 0.0):
        # a sample on a block boundary belongs to the block just finished
        return waveform.blocks[pos.block - 1].stage
    return waveform.blocks[pos.block].stage


def simulate(ensemble: TrapEnsemble, waveform: Waveform, device: DeviceParams, temperature=None,
             grid: LogGrid | None = None, workers: int = 1) -> DegradationTrace:
    """dVt(t) = -sum(eta_i * p_i(t)) sampled along ``waveform``.

    Without ``grid`` the trace is sampled at every read pulse. With ``grid``
    it is sampled at exactly those times on the waveform's sample axis
    (cumulative stress for AC, wall clock for DC). The trace always starts
    at t = 0 and ends at the end of the waveform. ``workers`` > 1 splits
    the traps across threads; the result is bit-identical to a serial run.
    """
    temperature = device.temperature if temperature is None else temperature
    positions = _sample_positions(waveform, grid)
    arrays = ensemble.arrays
    n = len(ensemble)

    def run(lo, hi):
        sub = {key: v[lo:hi] for key, v in arrays.items()}
        runner = _Runner(waveform, _Rates(sub, device, temperature, ensemble.reference_temperature))
        p = np.zeros(hi - lo)
        hist = []
        prev = Position(0, 0, 0, 0.0)
        for q in positions:
            p = runner.advance(p, prev, q) if waveform.blocks else p
            hist.append(p)
            prev = q
        return np.array(hist).reshape(len(positions), hi - lo)

    if not positions:
        hist = np.zeros((1, n))
        positions = [Position(0, 0, 0, 0.0)]
    elif workers > 1 and n > 1:
        bounds = np.linspace(0, n, min(workers, n) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, bounds[:-1], bounds[1:]))
        hist = np.concatenate(parts, axis=1)
    else:
        hist = run(0, n)

    eta = arrays["eta"]
    # fsum is exactly rounded, hence independent of slicing and order
    dvt = np.array([0.0 - math.fsum(eta * row) for row in hist])
    if waveform.blocks:
        t_wall = np.array([waveform.wall_time(q) for q in positions])
        t_cum = np.array([waveform.stress_time(q) for q in positions])
        phase = tuple(_stage(waveform, q) for q in positions)
    else:
        t_wall = t_cum = np.zeros(1)
        phase = (Phase.STRESS,)
    meta = {
        "temperature_k": temperature,
        "eot_nm": device.eot,
        "v_t0_v": device.v_t0,
        "seed": ensemble.seed,
        "n_traps": n,
        "waveform": dict(waveform.descriptor),
    }
    if waveform.relax_start is not None:
        meta["relax_start_s"] = waveform.relax_start
    return DegradationTrace(t_wall, t_cum, dvt, phase, meta)
