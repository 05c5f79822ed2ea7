import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from btiage.analysis import (
    DegradationTrace, NoBaselineError, ambient_cdf, dit_from_subthreshold, ideal_swing, peak_metrics,
    ttf_extension, ttf_project,
)
from btiage.models import Q_E
from btiage.waveform import Phase

S, R = Phase.STRESS, Phase.RELAX


def _trace(t, v, phase=None, meta=None):
    return DegradationTrace(t, t, v, phase or [S] * len(t), meta or {})


def _log_trace(scale=1.0):
    t = np.logspace(-3, 3, 61)
    return DegradationTrace(t, t * scale, -0.02 * np.log10(t / 1e-4), [S] * len(t))


def test_ttf_log_linear_interpolation():
    tr = _trace([1.0, 10.0, 100.0], [-0.05, -0.08, -0.14])
    rep = ttf_project(tr, 0.1)
    # |dVt| linear in log t between 10 s (80 mV) and 100 s (140 mV): one third of the decade
    assert rep.ttf == pytest.approx(10 ** (1 + 1 / 3))
    assert rep.crossing_method == "log-linear"


def test_ttf_first_sample_and_not_reached():
    assert ttf_project(_trace([1.0, 2.0], [-0.2, -0.3]), 0.1).crossing_method == "first-sample"
    rep = ttf_project(_trace([1.0, 2.0], [-0.01, -0.02]), 0.1)
    assert rep.ttf is None and not rep.reached


def test_ttf_ignores_zero_stress_sample():
    t = np.array([0.0, 1.0, 10.0])
    tr = DegradationTrace(np.array([1e-9, 1.0, 10.0]), t, [0.0, -0.05, -0.2], [S] * 3)
    assert ttf_project(tr, 0.1).ttf > 1.0


def test_extension_identity_and_scaling():
    a = _log_trace()
    assert ttf_extension(a, a, 0.06).extension_ratio == 1.0
    assert ttf_extension(_log_trace(100.0), a, 0.06).extension_ratio == pytest.approx(100.0)


def test_extension_lower_bound_and_no_baseline():
    ref = _log_trace()
    flat = _trace([1.0, 10.0], [-0.001, -0.002])
    rep = ttf_extension(flat, ref, 0.06)
    assert rep.ratio_is_lower_bound and rep.extension_ratio == pytest.approx(10.0 / ref.t_cum_stress[20], rel=0.3)
    with pytest.raises(NoBaselineError):
        ttf_extension(ref, flat, 0.06)


@given(st.floats(0.01, 0.13), st.floats(0.0, 0.02))
def test_ttf_monotone_in_tolerance(tol, extra):
    tr = _log_trace()
    a, b = ttf_project(tr, tol).ttf, ttf_project(tr, tol + extra).ttf
    if a is not None and b is not None:
        assert b >= a


def test_peak_metrics():
    t = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    tr = DegradationTrace(t, [1.0, 2.0, 2.0, 2.0, 2.0], [-0.1, -0.2, -0.15, -0.1, -0.05],
                          [S, S, R, R, R], {"relax_start_s": 2.0})
    pm = peak_metrics(tr)
    assert pm.t_peak == 2.0 and pm.peak == 0.2
    assert pm.recovered_fraction(3.0) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        pm.recovered_fraction(100.0)
    with pytest.raises(ValueError):
        peak_metrics(_trace([1.0, 2.0], [-0.1, -0.2])).recovered_fraction(1.0)


def test_peak_monotone_trace_is_last():
    tr = _log_trace()
    assert peak_metrics(tr).t_peak == tr.t_cum_stress[-1]


def test_trace_validation():
    with pytest.raises(ValueError):
        DegradationTrace([1.0, 1.0], [0.0, 0.0], [0.0, 0.0], [S, S])
    with pytest.raises(ValueError):
        DegradationTrace([1.0, 2.0], [1.0, 0.5], [0.0, 0.0], [S, S])


def test_cdf_examples():
    assert ambient_cdf([0.45]).median == 0.45
    assert ambient_cdf([-0.3, 0.0, 0.3], signed=True).median == 0.0
    s = ambient_cdf([0.4, 0.1, 0.3, 0.2])
    assert s.median == pytest.approx(0.25)
    assert [f for _, f in s.cdf_points] == [0.25, 0.5, 0.75, 1.0]


@given(st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=50))
def test_cdf_median_invariant_under_duplication(xs):
    assert ambient_cdf(xs).median == pytest.approx(ambient_cdf(xs + xs).median, abs=1e-15)


def test_dit():
    ideal = ideal_swing(300.0)
    assert ideal == pytest.approx(59.52, abs=0.01)
    assert dit_from_subthreshold(ideal, 300.0, 1.5e-6).d_it == 0.0
    one = dit_from_subthreshold(2 * ideal, 300.0, 1.5e-6).d_it
    two = dit_from_subthreshold(3 * ideal, 300.0, 1.5e-6).d_it
    assert two == pytest.approx(2 * one)
    est = dit_from_subthreshold(150.0, 300.0, 1.5e-6)
    assert est.d_it == pytest.approx(1.5e-6 / Q_E * (150.0 / (math.log(10) * 8.617333e-5 * 300 * 1000) - 1))
    assert 1e13 < est.d_it < 2e13 and est.method == "SS-based"
    with pytest.raises(ValueError):
        dit_from_subthreshold(50.0, 300.0, 1.5e-6)
