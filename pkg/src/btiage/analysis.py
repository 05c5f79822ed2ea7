"""Reliability quantities derived from degradation traces."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import K_B_EV, LN10, Q_E
from .waveform import Phase


class NoBaselineError(ValueError):
    """The reference trace never reaches the tolerance."""


@dataclass
class DegradationTrace:
    t_wall: np.ndarray
    t_cum_stress: np.ndarray
    delta_vt: np.ndarray  # signed, V
    phase: tuple[Phase, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_wall = np.asarray(self.t_wall, dtype=float)
        self.t_cum_stress = np.asarray(self.t_cum_stress, dtype=float)
        self.delta_vt = np.asarray(self.delta_vt, dtype=float)
        self.phase = tuple(Phase(p) for p in self.phase)
        n = len(self.t_wall)
        if not (len(self.t_cum_stress) == len(self.delta_vt) == len(self.phase) == n):
            raise ValueError("trace columns have different lengths")
        if n == 0:
            raise ValueError("trace is empty")
        if np.any(np.diff(self.t_wall) <= 0):
            raise ValueError("t_wall must be strictly increasing")
        if np.any(np.diff(self.t_cum_stress) < 0):
            raise ValueError("t_cum_stress must be nondecreasing")

    def __len__(self):
        return len(self.t_wall)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.delta_vt)

    def mask(self, phase: Phase) -> np.ndarray:
        return np.array([p is phase for p in self.phase])


@dataclass(frozen=True)
class TtfReport:
    tolerance: float
    ttf: float | None  # cumulative stress seconds; None = not reached
    crossing_method: str
    ttf_wall: float | None = None
    reference_ttf: float | None = None
    extension_ratio: float | None = None
    ratio_is_lower_bound: bool = False

    @property
    def reached(self) -> bool:
        return self.ttf is not None

    def to_dict(self):
        return {
            "tolerance": self.tolerance,
            "ttf": self.ttf,
            "ttf_wall": self.ttf_wall,
            "crossing_method": self.crossing_method,
            "reference_ttf": self.reference_ttf,
            "extension_ratio": self.extension_ratio,
            "ratio_is_lower_bound": self.ratio_is_lower_bound,
        }


def _loglin(t0, t1, v0, v1, target):
    """Time where the segment (log t, v) reaches ``target``."""
    if v1 == target or v1 == v0:
        return t1
    w = (target - v0) / (v1 - v0)
    return math.exp(math.log(t0) + w * (math.log(t1) - math.log(t0)))


def ttf_project(trace: DegradationTrace, tolerance: float) -> TtfReport:
    """Cumulative stress time at which |dVt| first reaches ``tolerance``.

    Interpolates log-linearly in time (linear in |dVt|) between the first
    stress sample at or above tolerance and the stress sample before it.
    Samples at zero cumulative stress never serve as the lower bracket.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be > 0")
    mag = trace.magnitude
    idx = [i for i in range(len(trace)) if trace.phase[i] is Phase.STRESS and trace.t_cum_stress[i] > 0]
    prev = None
    for i in idx:
        if mag[i] >= tolerance:
            if prev is None:
                return TtfReport(tolerance, float(trace.t_cum_stress[i]), "first-sample",
                                 float(trace.t_wall[i]))
            ts = _loglin(trace.t_cum_stress[prev], trace.t_cum_stress[i], mag[prev], mag[i], tolerance)
            tw = _loglin(trace.t_wall[prev], trace.t_wall[i], mag[prev], mag[i], tolerance)
            return TtfReport(tolerance, ts, "log-linear", tw)
        prev = i
    return TtfReport(tolerance, None, "not-reached")


def ttf_extension(subject: DegradationTrace, reference: DegradationTrace, tolerance: float) -> TtfReport:
    ref = ttf_project(reference, tolerance)
    if not ref.reached:
        raise NoBaselineError(f"reference trace never reaches |dVt| = {tolerance:g} V")
    sub = ttf_project(subject, tolerance)
    if sub.reached:
        return TtfReport(tolerance, sub.ttf, sub.crossing_method, sub.ttf_wall, ref.ttf, sub.ttf / ref.ttf)
    stress = subject.t_cum_stress[subject.mask(Phase.STRESS)]
    last = float(stress.max()) if stress.size else 0.0
    return TtfReport(tolerance, None, "not-reached", None, ref.ttf, last / ref.ttf, ratio_is_lower_bound=True)


@dataclass(frozen=True)
class PeakMetrics:
    t_peak: float
    peak: float  # |dVt| in V
    stress_end: float  # |dVt| at the last stress sample
    relax_start: float | None
    relax_times: np.ndarray
    relax_mag: np.ndarray

    def remaining_fraction(self, t_relax) -> float:
        if self.relax_start is None or self.relax_times.size == 0:
            raise ValueError("trace has no relax phase")
        t = self.relax_times
        if not t[0] * (1 - 1e-12) <= t_relax <= t[-1] * (1 + 1e-12):
            raise ValueError(f"t_relax={t_relax:g} s outside sampled relax window [{t[0]:g}, {t[-1]:g}] s")
        k = int(np.searchsorted(t, t_relax))
        if k < len(t) and t[k] == t_relax or k == 0:
            mag = self.relax_mag[min(k, len(t) - 1)]
        elif k >= len(t):
            mag = self.relax_mag[-1]
        else:
            w = (math.log(t_relax) - math.log(t[k - 1])) / (math.log(t[k]) - math.log(t[k - 1]))
            mag = self.relax_mag[k - 1] + w * (self.relax_mag[k] - self.relax_mag[k - 1])
        return mag / self.stress_end

    def recovered_fraction(self, t_relax) -> float:
        return 1.0 - self.remaining_fraction(t_relax)


def peak_metrics(trace: DegradationTrace) -> PeakMetrics:
    """Peak |dVt| of the stress phase and the relaxation that follows.

    Relax time is wall time since ``meta['relax_start_s']`` (or since the
    last stress sample when the trace carries no such entry).
    """
    stress = trace.mask(Phase.STRESS)
    if not stress.any():
        raise ValueError("trace has no stress phase")
    mag = trace.magnitude
    si = np.flatnonzero(stress)
    k = si[int(np.argmax(mag[si]))]
    last = si[-1]
    relax = trace.mask(Phase.RELAX)
    start = None
    times = np.empty(0)
    rmag = np.empty(0)
    if relax.any():
        start = float(trace.meta.get("relax_start_s", trace.t_wall[last]))
        ri = np.flatnonzero(relax & (trace.t_wall > start))
        times = trace.t_wall[ri] - start
        rmag = mag[ri]
    return PeakMetrics(float(trace.t_cum_stress[k]), float(mag[k]), float(mag[last]), start, times, rmag)


def time_to_fraction(trace: DegradationTrace, fraction: float, level: float) -> float | None:
    """Cumulative stress time at which |dVt| first reaches fraction * level."""
    return ttf_project(trace, fraction * level).ttf


@dataclass(frozen=True)
class CdfSummary:
    n: int
    median: float
    quantiles: tuple[tuple[float, float], ...]
    cdf_points: tuple[tuple[float, float], ...]


def ambient_cdf(samples, signed=False, probs=(0.1, 0.25, 0.5, 0.75, 0.9)) -> CdfSummary:
    """Empirical CDF with fraction = rank / n; quantiles are type 7."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    if not signed:
        x = np.abs(x)
    x = np.sort(x)
    n = x.size
    q = tuple((float(p), float(np.quantile(x, p, method="linear"))) for p in probs)
    pts = tuple((float(v), (i + 1) / n) for i, v in enumerate(x))
    return CdfSummary(n, float(np.quantile(x, 0.5, method="linear")), q, pts)


@dataclass(frozen=True)
class DitEstimate:
    ss: float  # mV/dec
    temperature: float  # K
    c_ox: float  # F/cm^2
    d_it: float  # cm^-2 eV^-1
    method: str = "SS-based"


def ideal_swing(temperature) -> float:
    """Thermionic limit ln(10) kT/q in mV/decade."""
    return LN10 * K_B_EV * temperature * 1000.0


def dit_from_subthreshold(ss, temperature, c_ox) -> DitEstimate:
    """D_it = (C_ox / q) (SS / SS_ideal - 1), depletion capacitance neglected."""
    if not temperature > 0 or not c_ox > 0:
        raise ValueError("temperature and c_ox must be > 0")
    ideal = ideal_swing(temperature)
    if ss < ideal:
        raise ValueError(f"SS {ss:g} mV/dec is below the ideal limit {ideal:.3f} mV/dec at {temperature:g} K")
    return DitEstimate(ss, temperature, c_ox, c_ox / Q_E * (ss / ideal - 1.0))
