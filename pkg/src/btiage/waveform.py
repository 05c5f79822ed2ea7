"""Piecewise-constant gate-stress schedules for DC and AC (pulsed) BTI runs.

A :class:`Waveform` is an ordered tuple of :class:`Block` objects. Each block
is a cycle template (one or more :class:`BiasSegment`) repeated ``count``
times, so a 10 MHz AC run lasting 10^3 s of cumulative stress is a handful of
blocks rather than 10^10 explicit segments. DC schedules use ``count = 1``
blocks throughout.

Read segments are spot measurements: their duration lands on the wall clock
but counts as neither stress nor relax time.
"""
from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class Phase(str, enum.Enum):
    STRESS = "stress"
    RELAX = "relax"
    READ = "read"


class Pattern(str, enum.Enum):
    RELAX_STRESS_MEASURE = "relax-stress-measure"
    STRESS_RELAX_MEASURE = "stress-relax-measure"


class WaveformError(ValueError):
    pass


@dataclass(frozen=True)
class LogGrid:
    t_min: float
    t_max: float
    points_per_decade: int

    def __post_init__(self):
        if not 0 < self.t_min < self.t_max:
            raise WaveformError(f"need 0 < t_min < t_max, got {self.t_min}, {self.t_max}")
        if self.points_per_decade < 1:
            raise WaveformError("points_per_decade must be >= 1")

    def times(self) -> np.ndarray:
        """t_min * 10^(k/ppd) for every k that stays within t_max."""
        n = math.floor(self.points_per_decade * math.log10(self.t_max / self.t_min) + 1e-9)
        t = self.t_min * 10.0 ** (np.arange(n + 1) / self.points_per_decade)
        # log10 round-trip can put the last point a few ulp past t_max
        return np.minimum(t, self.t_max)


@dataclass(frozen=True)
class BiasSegment:
    duration: float
    v_gs: float
    phase: Phase

    def __post_init__(self):
        if not self.duration > 0 or not math.isfinite(self.duration):
            raise WaveformError(f"segment duration must be finite and > 0, got {self.duration}")


@dataclass(frozen=True)
class Block:
    """A cycle template repeated ``count`` times.

    ``stage`` is the experiment phase the block belongs to (STRESS for every
    AC block, STRESS or RELAX for DC); samples taken inside it carry it.
    """

    segments: tuple[BiasSegment, ...]
    count: int
    stage: Phase

    def __post_init__(self):
        if not self.segments:
            raise WaveformError("block needs at least one segment")
        if self.count < 1:
            raise WaveformError("block count must be >= 1")

    @cached_property
    def period(self) -> float:
        return math.fsum(s.duration for s in self.segments)

    @cached_property
    def stress_per_cycle(self) -> float:
        return math.fsum(s.duration for s in self.segments if s.phase is Phase.STRESS)

    @property
    def duration(self) -> float:
        return self.count * self.period

    @property
    def stress_duration(self) -> float:
        return self.count * self.stress_per_cycle

    def partial(self, j: int, dt: float, phase: Phase | None = None) -> float:
        """Time spent in the first ``j`` segments plus ``dt`` into segment j.

        With ``phase`` given, only segments of that phase are counted.
        """
        parts = [s.duration for s in self.segments[:j] if phase is None or s.phase is phase]
        if dt and (phase is None or self.segments[j].phase is phase):
            parts.append(dt)
        return math.fsum(parts)


@dataclass(frozen=True)
class Position:
    """A point inside a waveform: block ``block``, after ``k`` whole cycles,
    ``j`` whole segments and ``dt`` seconds into segment ``j``."""

    block: int
    k: int
    j: int
    dt: float


@dataclass(frozen=True)
class Waveform:
    blocks: tuple[Block, ...]
    v_stress: float
    v_relax: float = 0.0
    kind: str = "dc"
    # axis on which sampling grids are expressed: "wall" or "stress"
    sample_axis: str = "wall"
    descriptor: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for b in self.blocks:
            for s in b.segments:
                if s.phase is Phase.STRESS and s.v_gs != self.v_stress:
                    raise WaveformError("stress segment not at the stress level")
                if s.phase is Phase.RELAX and s.v_gs != self.v_relax:
                    raise WaveformError("relax segment not at the relax level")
        if self.sample_axis not in ("wall", "stress"):
            raise WaveformError(f"unknown sample axis {self.sample_axis!r}")

    @cached_property
    def wall_starts(self) -> tuple[float, ...]:
        d = [b.duration for b in self.blocks]
        return tuple(math.fsum(d[:i]) for i in range(len(d) + 1))

    @cached_property
    def stress_starts(self) -> tuple[float, ...]:
        d = [b.stress_duration for b in self.blocks]
        return tuple(math.fsum(d[:i]) for i in range(len(d) + 1))

    @property
    def duration(self) -> float:
        return self.wall_starts[-1]

    @property
    def total_stress(self) -> float:
        return self.stress_starts[-1]

    @property
    def n_cycles(self) -> int:
        return sum(b.count for b in self.blocks if b.stress_per_cycle > 0 and len(b.segments) > 1)

    @cached_property
    def relax_start(self) -> float | None:
        """Wall time at which the first RELAX-stage block begins, if any."""
        for i, b in enumerate(self.blocks):
            if b.stage is Phase.RELAX:
                return self.wall_starts[i]
        return None

    def segments(self):
        """Lazily expand every cycle into explicit segments."""
        for b in self.blocks:
            for _ in range(b.count):
                yield from b.segments

    def wall_time(self, pos: Position) -> float:
        b = self.blocks[pos.block]
        return math.fsum([self.wall_starts[pos.block], pos.k * b.period, b.partial(pos.j, pos.dt)])

    def stress_time(self, pos: Position) -> float:
        b = self.blocks[pos.block]
        return math.fsum([
            self.stress_starts[pos.block],
            pos.k * b.stress_per_cycle,
            b.partial(pos.j, pos.dt, Phase.STRESS),
        ])

    def end_position(self) -> Position:
        if not self.blocks:
            return Position(0, 0, 0, 0.0)
        last = len(self.blocks) - 1
        return Position(last, self.blocks[last].count, 0, 0.0)

    def locate_wall(self, t_wall: float) -> Position:
        if not 0 <= t_wall <= self.duration:
            raise WaveformError(f"t_wall={t_wall} outside [0, {self.duration}]")
        if not self.blocks:
            return Position(0, 0, 0, 0.0)
        if t_wall == self.duration:
            return self.end_position()
        i = bisect.bisect_right(self.wall_starts, t_wall) - 1
        i = min(i, len(self.blocks) - 1)
        b = self.blocks[i]
        k, rem = _whole_cycles(t_wall - self.wall_starts[i], b.period, b.count)
        j, dt = _walk(b, rem, None)
        return Position(i, k, j, dt)

    def locate_stress(self, t_stress: float) -> Position:
        """First position at which cumulative stress reaches ``t_stress``."""
        if not 0 <= t_stress <= self.total_stress:
            raise WaveformError(f"t_cum_stress={t_stress} outside [0, {self.total_stress}]")
        if t_stress == 0 or not self.blocks:
            return Position(0, 0, 0, 0.0)
        i = bisect.bisect_left(self.stress_starts, t_stress) - 1
        b = self.blocks[i]
        local = t_stress - self.stress_starts[i]
        # last cycle whose stress is still incomplete
        k, rem = _whole_cycles(local, b.stress_per_cycle, b.count)
        if rem == 0.0 and k > 0:
            k, rem = k - 1, b.stress_per_cycle
        j, dt = _walk(b, rem, Phase.STRESS)
        return Position(i, k, j, dt)


def _whole_cycles(local: float, period: float, count: int) -> tuple[int, float]:
    """Split ``local`` into whole cycles and a remainder in [0, period)."""
    q = local / period
    k = math.floor(q)
    r = round(q)
    if abs(q - r) <= max(1e-9, 8 * np.finfo(float).eps * q):
        k = r
    k = max(0, min(k, count))
    if k == count:
        return k - 1, period if count else 0.0
    rem = min(max(local - k * period, 0.0), period)
    if rem >= period:
        return k + 1, 0.0
    return k, rem


def _walk(block: Block, amount: float, phase: Phase | None) -> tuple[int, float]:
    """Segment index and offset where ``amount`` of (phase-)time is reached."""
    acc = 0.0
    for j, s in enumerate(block.segments):
        if phase is not None and s.phase is not phase:
            continue
        if amount <= acc + s.duration:
            dt = max(amount - acc, 0.0)
            if phase is None and dt >= s.duration:
                continue
            return j, dt
        acc += s.duration
    return len(block.segments) - 1, block.segments[-1].duration


def cumulative_stress_time(waveform: Waveform, t_wall: float) -> float:
    """Stress time elapsed by wall time ``t_wall`` (reads and relax excluded)."""
    return waveform.stress_time(waveform.locate_wall(t_wall))


# --- DC -----------------------------------------------------------------------


@dataclass(frozen=True)
class DcStressSpec:
    v_stress: float
    v_read: float
    stress_duration: float
    relax_duration: float
    sample_grid: LogGrid
    read_pulse_width: float = 1e-3
    read_to_relax_delay: float = 1e-3

    def __post_init__(self):
        if not self.stress_duration > 0:
            raise WaveformError("stress_duration must be > 0")
        if self.relax_duration < 0:
            raise WaveformError("relax_duration must be >= 0")
        if not self.read_pulse_width > 0:
            raise WaveformError("read_pulse_width must be > 0")
        if not 0 <= self.read_to_relax_delay < self.stress_duration:
            raise WaveformError("read_to_relax_delay must lie in [0, stress_duration)")


def _interleave(times, end, level, phase, read_seg, stage):
    """Blocks of ``phase`` at ``level`` broken by reads at ``times`` (all <= end)."""
    blocks = []
    prev = 0.0
    for t in times:
        if t > prev:
            blocks.append(Block((BiasSegment(t - prev, level, phase),), 1, stage))
        blocks.append(Block((read_seg,), 1, stage))
        prev = t
    if end > prev:
        blocks.append(Block((BiasSegment(end - prev, level, phase),), 1, stage))
    return blocks


def build_dc_waveform(spec: DcStressSpec) -> Waveform:
    """On-the-fly DC stress followed by relaxation.

    Grid times are measured from the start of each phase on a clock that
    excludes read pulses. Stress reads happen at grid times up to
    ``stress_duration - read_to_relax_delay``; a grid point inside that final
    hold is read at the start of the hold. The hold stays at the stress level
    and is part of ``stress_duration``. Relax reads happen at grid times up
    to ``relax_duration``.
    """
    grid = spec.sample_grid.times()
    horizon = spec.stress_duration + spec.relax_duration
    bad = grid[grid > horizon * (1 + 1e-12)]
    if bad.size:
        raise WaveformError(
            f"sample grid time {bad[0]:g} s lies outside the schedule [0, {horizon:g}] s"
        )
    read = BiasSegment(spec.read_pulse_width, spec.v_read, Phase.READ)
    last_read = spec.stress_duration - spec.read_to_relax_delay
    stress_reads = sorted({min(float(t), last_read) for t in grid if t <= spec.stress_duration})
    blocks = _interleave(stress_reads, last_read, spec.v_stress, Phase.STRESS, read, Phase.STRESS)
    if spec.read_to_relax_delay > 0:
        blocks.append(
            Block((BiasSegment(spec.read_to_relax_delay, spec.v_stress, Phase.STRESS),), 1, Phase.STRESS)
        )
    if spec.relax_duration > 0:
        relax_reads = [float(t) for t in grid if t <= spec.relax_duration]
        blocks += _interleave(relax_reads, spec.relax_duration, 0.0, Phase.RELAX, read, Phase.RELAX)
    return Waveform(
        tuple(blocks),
        v_stress=spec.v_stress,
        v_relax=0.0,
        kind="dc",
        sample_axis="wall",
        descriptor={
            "kind": "dc",
            "v_stress": spec.v_stress,
            "stress_duration": spec.stress_duration,
            "relax_duration": spec.relax_duration,
        },
    )


# --- AC -----------------------------------------------------------------------


@dataclass(frozen=True)
class AcStressSpec:
    v_stress: float
    frequency: float
    duty: float
    target_cumulative_stress: float
    sample_grid: LogGrid | None = None
    pattern: Pattern = Pattern.RELAX_STRESS_MEASURE
    v_relax: float = 0.0
    v_read: float = -0.5
    read_pulse_width: float = 1e-3

    def __post_init__(self):
        if not 0 < self.duty < 1:
            raise WaveformError(f"duty must lie in (0, 1), got {self.duty}")
        if not self.frequency > 0:
            raise WaveformError(f"frequency must be > 0, got {self.frequency}")
        if not self.target_cumulative_stress > 0:
            raise WaveformError("target_cumulative_stress must be > 0")
        if not self.read_pulse_width > 0:
            raise WaveformError("read_pulse_width must be > 0")

    @property
    def t_stress(self) -> float:
        return self.duty / self.frequency

    @property
    def t_relax(self) -> float:
        return (1.0 - self.duty) / self.frequency

    @property
    def period(self) -> float:
        return 1.0 / self.frequency


def _cycles_for(stress: float, per_cycle: float) -> int:
    return max(1, math.ceil(stress / per_cycle * (1 - 1e-12)))


def build_ac_waveform(spec: AcStressSpec) -> Waveform:
    """Periodic stress/relax cycles with reads after whole cycles.

    A read is placed after the first whole cycle at which cumulative stress
    reaches each grid time (grid on the cumulative-stress axis). The run ends
    after the first whole cycle reaching ``target_cumulative_stress``.
    """
    stress = BiasSegment(spec.t_stress, spec.v_stress, Phase.STRESS)
    relax = BiasSegment(spec.t_relax, spec.v_relax, Phase.RELAX)
    if spec.pattern is Pattern.RELAX_STRESS_MEASURE:
        cycle = (relax, stress)
    else:
        cycle = (stress, relax)
    n_total = _cycles_for(spec.target_cumulative_stress, spec.t_stress)
    marks = []
    if spec.sample_grid is not None:
        grid = spec.sample_grid.times()
        if grid[-1] > spec.target_cumulative_stress * (1 + 1e-12):
            raise WaveformError(
                f"sample grid time {grid[-1]:g} s exceeds target cumulative stress "
                f"{spec.target_cumulative_stress:g} s"
            )
        marks = sorted({min(_cycles_for(t, spec.t_stress), n_total) for t in grid})
    read = BiasSegment(spec.read_pulse_width, spec.v_read, Phase.READ)
    blocks = []
    done = 0
    for n in marks:
        if n > done:
            blocks.append(Block(cycle, n - done, Phase.STRESS))
            done = n
        blocks.append(Block((read,), 1, Phase.STRESS))
    if n_total > done:
        blocks.append(Block(cycle, n_total - done, Phase.STRESS))
    return Waveform(
        tuple(blocks),
        v_stress=spec.v_stress,
        v_relax=spec.v_relax,
        kind="ac",
        sample_axis="stress",
        descriptor={
            "kind": "ac",
            "v_stress": spec.v_stress,
            "frequency": spec.frequency,
            "duty": spec.duty,
            "pattern": spec.pattern.value,
            "target_cumulative_stress": spec.target_cumulative_stress,
        },
    )
