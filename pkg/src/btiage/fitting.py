"""Deterministic parameter estimation for the empirical NBTI models.

The duty-cycle and relaxation fits have one nonlinear parameter each; the
other is solved in closed form. The nonlinear one is scanned on a fixed
grid and the best grid point is refined by golden-section search. Ties go
to the smaller parameter value, so results never depend on evaluation
order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .models import DutyCycleLogModel, PowerLawModel, UniversalRelaxModel

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
B_GRID = (1e-4, 1e6, 25)  # lo, hi, points per decade
BETA_GRID = np.round(np.arange(0.05, 1.0 + 1e-9, 0.01), 10)
B_R_MIN = 1e-12


class FitError(ValueError):
    """Fit preconditions are not met."""


class FieldTimeSample(NamedTuple):
    xi: float  # MV/cm
    t: float  # s
    delta_vt: float  # V


class DutySample(NamedTuple):
    duty: float
    delta_vt_mag: float  # V
    t_stress_cumulative: float = 1e3


class RelaxSample(NamedTuple):
    xi_ratio: float  # t_relax / t_stress
    fraction: float  # remaining fraction


@dataclass
class FitResult:
    params: object
    residual_rms: float
    n_points: int
    converged: bool
    search_trace_summary: str
    flags: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "residual_rms": self.residual_rms,
            "n_points": self.n_points,
            "converged": self.converged,
            "search_trace_summary": self.search_trace_summary,
            "flags": list(self.flags),
        }


def golden_section(f, lo, hi, width, relative=True, max_iter=500):
    """Minimize a unimodal ``f`` on [lo, hi].

    Stops once the bracket is narrower than ``width`` (times |x| when
    ``relative``). Returns (x, f(x), iterations).
    """
    c = hi - GOLDEN * (hi - lo)
    d = lo + GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    it = 0
    while it < max_iter:
        scale = max(abs(c), abs(d)) if relative else 1.0
        if hi - lo <= width * scale:
            break
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - GOLDEN * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + GOLDEN * (hi - lo)
            fd = f(d)
        it += 1
    return (c, fc, it) if fc <= fd else (d, fd, it)


def _refine(objective, grid, values, log_scale, rel_width=1e-6):
    """Golden-section refinement between the neighbours of the best grid point.

    Returns (x, f, grid index, iterations); the grid optimum is kept unless
    refinement strictly beats it.
    """
    # total order: objective first, then parameter value
    i = min(range(len(grid)), key=lambda k: (values[k], grid[k]))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    if log_scale:
        # a relative width in x is an absolute width in log x
        u, fx, it = golden_section(lambda u: objective(math.exp(u)), math.log(lo), math.log(hi),
                                   rel_width, relative=False)
        x = math.exp(u)
    else:
        x, fx, it = golden_section(objective, lo, hi, rel_width)
    if fx < values[i]:
        return x, fx, i, it
    return grid[i], values[i], i, it


def _trim(residuals, trim_fraction):
    """Indices kept after dropping the largest |residual| fraction."""
    n = len(residuals)
    drop = math.ceil(trim_fraction * n)
    order = np.lexsort((np.arange(n), np.abs(residuals)))
    return np.sort(order[: n - drop])


# --- power law ----------------------------------------------------------------


def fit_powerlaw(samples, trim_fraction=0.0) -> FitResult:
    """OLS on log|dVt| = log c0 + m log|xi| + alpha log t."""
    rows = sorted((abs(float(s[0])), float(s[1]), float(s[2])) for s in samples)
    if not rows:
        raise FitError("no samples")
    bad = [i for i, r in enumerate(rows) if not abs(r[2]) > 0 or not r[1] > 0 or not r[0] > 0]
    if bad:
        raise FitError(f"nonpositive |xi|, t or |delta_vt| in rows {bad}")
    xi = np.array([r[0] for r in rows])
    t = np.array([r[1] for r in rows])
    y = np.log(np.abs([r[2] for r in rows]))
    if len(set(xi)) < 3:
        raise FitError(f"field axis is rank-deficient: {len(set(xi))} distinct |xi| values, need >= 3")
    if len(set(t)) < 3:
        raise FitError(f"time axis is rank-deficient: {len(set(t))} distinct t values, need >= 3")
    X = np.column_stack([np.ones_like(xi), np.log(xi), np.log(t)])
    keep = np.arange(len(y))
    coef = np.linalg.lstsq(X, y, rcond=None)[0]
    if trim_fraction > 0:
        keep = _trim(y - X @ coef, trim_fraction)
        coef = np.linalg.lstsq(X[keep], y[keep], rcond=None)[0]
    log_c0, m, alpha = (float(v) for v in coef)
    c0 = math.exp(log_c0)
    flags = []
    if not m > 0:
        flags.append("m_nonpositive")
    if not 0 < alpha < 1:
        flags.append("alpha_outside_unit_interval")
    params = _RawPowerLaw(c0, m, alpha) if flags else PowerLawModel(c0, m, alpha)
    model = c0 * xi[keep] ** m * t[keep] ** alpha
    obs = np.exp(y[keep])
    rms = float(np.sqrt(np.mean((obs - model) ** 2)))
    return FitResult(params, rms, len(keep), True, "linear least squares in log space", tuple(flags))


@dataclass(frozen=True)
class _RawPowerLaw:
    """Power-law coefficients that fall outside PowerLawModel's domain."""

    c0: float
    m: float
    alpha: float

    def to_dict(self):
        return {"c0": self.c0, "m": self.m, "alpha": self.alpha}


# --- duty cycle ---------------------------------------------------------------


def _duty_arrays(samples):
    rows = [(float(s[0]), float(s[1]), float(s[2]) if len(s) > 2 else None) for s in samples]
    if not rows:
        raise FitError("no samples")
    ts = {r[2] for r in rows}
    if len(ts) > 1:
        raise FitError(f"samples mix cumulative stress times {sorted(ts, key=str)}")
    d = np.array([r[0] for r in rows])
    y = np.array([r[1] for r in rows])
    bad = np.flatnonzero((d < 0) | (d >= 1))
    if bad.size:
        raise FitError(f"duty outside [0, 1) in rows {bad.tolist()}")
    if len(set(d.tolist())) < 3:
        raise FitError(f"need >= 3 distinct duty values, got {len(set(d.tolist()))}")
    return d, y


def _best_a(x, y):
    xx = float(np.dot(x, x))
    if xx == 0:
        return 0.0
    return max(float(np.dot(x, y)) / xx, 0.0)


def fit_dutycycle(samples, fixed_b=None, trim_fraction=0.0) -> FitResult:
    """|dVt| = a ln(1 + b D/(1-D)); a closed-form per b, b by grid + golden.

    The loss is the plain sum of squared residuals in volts.
    """
    d, y = _duty_arrays(samples)
    keep = np.arange(len(y))
    ratio = d / (1.0 - d)

    def solve(b, idx):
        x = np.log1p(b * ratio[idx])
        a = _best_a(x, y[idx])
        r = y[idx] - a * x
        return a, float(np.dot(r, r))

    def run(idx):
        if fixed_b is not None:
            a, sse = solve(fixed_b, idx)
            return a, fixed_b, sse, "b fixed"
        lo, hi, ppd = B_GRID
        n = round(ppd * math.log10(hi / lo))
        grid = [lo * 10.0 ** (k / ppd) for k in range(n + 1)]
        values = [solve(b, idx)[1] for b in grid]
        b, sse, i, it = _refine(lambda b: solve(b, idx)[1], grid, values, log_scale=True)
        a, sse = solve(b, idx)
        note = f"grid {len(grid)} b values, best index {i}; golden {it} iterations"
        return a, b, sse, note

    a, b, sse, note = run(keep)
    if trim_fraction > 0:
        keep = _trim(y - a * np.log1p(b * ratio), trim_fraction)
        a, b, sse, note = run(keep)
    flags = []
    if not np.any(y[keep]):
        a, b = 0.0, B_GRID[0]
        flags.append("b_unidentifiable")
        note += "; all |dVt| are zero"
    rms = math.sqrt(sse / len(keep))
    return FitResult(DutyCycleLogModel(a, b), rms, len(keep), True, note, tuple(flags))


# --- universal relaxation -----------------------------------------------------


def fit_universal_relax(samples, trim_fraction=0.0) -> FitResult:
    """r = 1/(1 + b_r xi^beta); beta by grid + golden, b_r closed-form per beta.

    For a given beta, log b_r is the mean of log(1/r - 1) - beta log xi over
    points with 0 < r < 1 and xi > 0. beta is selected on the squared error
    of r itself.
    """
    rows = [(float(s[0]), float(s[1])) for s in samples]
    if len(rows) < 3:
        raise FitError(f"need >= 3 points, got {len(rows)}")
    xi = np.array([r[0] for r in rows])
    r = np.array([r[1] for r in rows])
    bad = np.flatnonzero(~((r > 0) & (r <= 1)))
    if bad.size:
        raise FitError(f"fraction outside (0, 1] in rows {bad.tolist()}")
    if np.any(xi < 0):
        raise FitError("xi_ratio must be >= 0")
    keep = np.arange(len(r))

    def solve(beta, idx):
        use = idx[(r[idx] < 1) & (xi[idx] > 0)]
        if use.size == 0:
            b_r = B_R_MIN
        else:
            z = np.log(1.0 / r[use] - 1.0) - beta * np.log(xi[use])
            b_r = max(math.exp(float(np.mean(z))), B_R_MIN)
        model = 1.0 / (1.0 + b_r * xi[idx] ** beta)
        res = r[idx] - model
        return b_r, float(np.dot(res, res))

    def run(idx):
        grid = [float(b) for b in BETA_GRID]
        values = [solve(b, idx)[1] for b in grid]
        beta, sse, i, it = _refine(lambda b: solve(b, idx)[1], grid, values, log_scale=False)
        b_r, sse = solve(beta, idx)
        note = f"grid {len(grid)} beta values, best index {i}; golden {it} iterations"
        vmin, vmax = min(values), max(values)
        near = sum(v <= 2.0 * vmin + 1e-30 for v in values)
        flat = vmax - vmin <= 1e-12 or near > len(values) // 2
        return b_r, beta, sse, note, flat

    b_r, beta, sse, note, flat = run(keep)
    if trim_fraction > 0:
        res = r - 1.0 / (1.0 + b_r * xi ** beta)
        keep = _trim(res, trim_fraction)
        b_r, beta, sse, note, flat = run(keep)
    flags = []
    if not np.any(r[keep] < 1):
        b_r, beta = B_R_MIN, float(BETA_GRID[0])
        flags.append("unidentifiable")
        note += "; no relaxation in data"
    elif flat:
        flags.append("flat_objective")
        note += "; flat objective: beta poorly constrained"
    rms = math.sqrt(sse / len(keep))
    return FitResult(UniversalRelaxModel(b_r, beta), rms, len(keep), True, note, tuple(flags))
