"""Acceptance criteria 1-11, one test each, at the stated tolerances."""
import json
import math
import subprocess
import sys
import time

import numpy as np

from oracles import physical_duty_direct, euler_capture, naive_occupancy

from btiage import scenarios
from btiage.analysis import peak_metrics, time_to_fraction, ttf_extension, ttf_project
from btiage.cli import main
from btiage.fitting import DutySample, fit_dutycycle, fit_powerlaw, fit_universal_relax
from btiage.io import load_config, device_from_config, ensemble_from_config, read_trace_csv, waveform_from_config
from btiage.models import (
    DeviceParams, DutyCycleLogModel, PowerLawModel, TrapPhysicalParams, UniversalRelaxModel,
    dutycycle_eval_times, dutycycle_from_physical, dutycycle_eval, powerlaw_eval, universal_relax_eval,
)
from btiage.trapsim import (
    EnsembleGenSpec, OccupancyState, Trap, TrapEnsemble, gen_ensemble, simulate, step_segment,
)
from btiage.waveform import (
    AcStressSpec, BiasSegment, DcStressSpec, LogGrid, Phase, build_ac_waveform, build_dc_waveform,
)
from btiage.analysis import DegradationTrace

DEVICE = DeviceParams(eot=2.13, v_t0=-0.3, c_ox=1.5e-6, temperature=298.15)


def _run_scenario(name, tmp_path):
    out = tmp_path / (name + ".csv")
    assert main(["simulate", "--config", str(scenarios.path(name + ".cfg")), "--out", str(out)]) == 0
    return read_trace_csv(out)


def test_c01_single_trap_vs_forward_euler(accept):
    tau = 1.0
    ens = TrapEnsemble((Trap(tau, 10.0, 0.1),))
    dt = tau / 1e4
    # whole Euler steps, half-decade spacing over 1e-3 .. 1e3 tau
    checkpoints = [round(10.0 ** (k / 2) * 1e4) * dt for k in range(-6, 7)]
    t0 = time.perf_counter()
    euler = euler_capture(tau, dt, checkpoints)
    state = OccupancyState.empty(ens)
    exact = []
    prev = 0.0
    for tc in checkpoints:
        state = step_segment(state, ens, BiasSegment(tc - prev, -1.2, Phase.STRESS), DEVICE, 298.15)
        exact.append(float(state.p[0]))
        prev = tc
    elapsed = time.perf_counter() - t0
    err = max(abs(e - x) / x for e, x in zip(euler, exact))
    ok = err <= 1e-6 and elapsed < 10
    accept(1, ok, f"max rel err {err:.3g} (need <= 1e-6), {elapsed:.1f} s")
    assert elapsed < 10
    assert err <= 1e-6


def test_c02_cycle_composition(accept):
    ens = gen_ensemble(EnsembleGenSpec(n_traps=50, tau_c_range=(1e-5, 1e-1), tau_e_range=(1e-5, 1e-1)), 3)
    spec = AcStressSpec(v_stress=-1.2, frequency=1e3, duty=0.3, target_cumulative_stress=1e3 * 0.3e-3)
    wf = build_ac_waveform(spec)
    assert wf.n_cycles == 1000
    t0 = time.perf_counter()
    fast = simulate(ens, wf, DEVICE)
    p = naive_occupancy(ens.traps, list(wf.segments()), 298.15, ens.reference_temperature, DEVICE.v_t0, DEVICE.eot)
    naive = -math.fsum(t.eta * q for t, q in zip(ens.traps, p))
    elapsed = time.perf_counter() - t0
    err = abs(fast.delta_vt[-1] - naive) / abs(naive)
    accept(2, err <= 1e-12 and elapsed < 10, f"rel diff {err:.3g} (need <= 1e-12), {elapsed:.1f} s")
    assert err <= 1e-12 and elapsed < 10


def test_c03_frequency_independence(accept):
    ens = gen_ensemble(EnsembleGenSpec(tau_c_range=(0.1, 1e3), tau_e_range=(0.1, 1e3)), 5)
    grid = LogGrid(1e-3, 10.0, 10)
    traces = []
    for f in (1e3, 1e7):
        wf = build_ac_waveform(AcStressSpec(-1.2, f, 0.5, 10.0))
        traces.append(simulate(ens, wf, DEVICE, grid=grid))
    a, b = traces
    np.testing.assert_allclose(a.t_cum_stress, b.t_cum_stress, rtol=1e-12)
    sel = a.t_cum_stress >= 1e-3 * (1 - 1e-12)
    rel = np.abs(a.magnitude[sel] - b.magnitude[sel]) / b.magnitude[sel]
    worst = float(rel.max())
    accept(3, worst <= 0.02, f"max |dVt| disagreement {worst:.3%} over {sel.sum()} samples (need <= 2%)")
    assert worst <= 0.02


def test_c04_duty_monotonicity(accept):
    ens = gen_ensemble(EnsembleGenSpec(), 1)
    grid = LogGrid(1.0, 100.0, 1)
    dc = simulate(ens, build_dc_waveform(DcStressSpec(-1.2, -0.5, 100.0, 0.0, grid)), DEVICE)
    ac = {d: simulate(ens, build_ac_waveform(AcStressSpec(-1.2, 1e3, d, 100.0)), DEVICE, grid=grid)
          for d in (0.5, 0.2)}
    rows = []
    for t in grid.times():
        vals = []
        for tr in (dc, ac[0.5], ac[0.2]):
            i = int(np.flatnonzero(np.isclose(tr.t_cum_stress, t, rtol=1e-12))[0])
            vals.append(tr.magnitude[i])
        rows.append((t, *vals))
    ok = all(v1 > v5 > v2 for _, v1, v5, v2 in rows)
    detail = "; ".join(f"t={t:g}s: {v1*1e3:.1f} > {v5*1e3:.1f} > {v2*1e3:.1f} mV" for t, v1, v5, v2 in rows)
    accept(4, ok, detail)
    assert ok


def test_c05_calibrated_ttf_ratios(accept, tmp_path):
    t0 = time.perf_counter()
    dc = _run_scenario("calibration_dc", tmp_path)
    d50 = _run_scenario("calibration_ac_d50", tmp_path)
    d20 = _run_scenario("calibration_ac_d20", tmp_path)
    elapsed = time.perf_counter() - t0
    ref = ttf_project(dc, 0.1)
    r50 = ttf_extension(d50, dc, 0.1)
    r20 = ttf_extension(d20, dc, 0.1)
    ok = (abs(ref.ttf - 0.1) <= 0.05 and r50.extension_ratio >= 1e2 and r20.extension_ratio >= 1e4
          and elapsed < 120)
    bound = lambda r: (">" if r.ratio_is_lower_bound else "") + f"{r.extension_ratio:.4g}"
    accept(5, ok, f"DC TTF {ref.ttf:.4g} s; D=0.5 ratio {bound(r50)}; D=0.2 ratio {bound(r20)}; {elapsed:.1f} s")
    assert abs(ref.ttf - 0.1) <= 0.05
    assert r50.extension_ratio >= 1e2
    assert r20.extension_ratio >= 1e4
    assert elapsed < 120


def test_c06_fit_round_trips(accept):
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.Philox(42))
    truth = PowerLawModel(c0=2e-3, m=2.5, alpha=0.2)
    xi = [3.0, 4.0, 5.0, 6.0, 7.0]
    ts = np.logspace(0, 3, 8)
    rows = [(x, t, powerlaw_eval(truth, x, t) * math.exp(rng.normal(0.0, 0.01))) for x in xi for t in ts]
    pl = fit_powerlaw(rows).params
    pl_err = max(abs(pl.m / truth.m - 1), abs(pl.alpha / truth.alpha - 1))

    duty_truth = DutyCycleLogModel(a=0.012, b=35.0)
    duties = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
    dc_fit = fit_dutycycle([DutySample(d, dutycycle_eval(duty_truth, d)) for d in duties]).params
    dc_err = max(abs(dc_fit.a / duty_truth.a - 1), abs(dc_fit.b / duty_truth.b - 1))

    rel_truth = UniversalRelaxModel(b_r=0.4, beta=0.23)
    ratios = np.logspace(-4, 3, 15)
    ur = fit_universal_relax([(x, universal_relax_eval(rel_truth, x, 1.0)) for x in ratios]).params
    ur_err = max(abs(ur.b_r / rel_truth.b_r - 1), abs(ur.beta / rel_truth.beta - 1))
    elapsed = time.perf_counter() - t0
    ok = pl_err <= 0.05 and dc_err <= 0.01 and ur_err <= 0.02 and elapsed < 30
    accept(6, ok, f"powerlaw {pl_err:.2%} (<=5%), duty {dc_err:.2e} (<=1%), relax {ur_err:.2e} (<=2%), {elapsed:.1f} s")
    assert ok


def test_c07_powerlaw_ttf_inversion(accept):
    model = PowerLawModel(c0=5e-3, m=2.0, alpha=0.25)
    xi, tol = 4.0, 0.15
    t = LogGrid(1e-3, 1e6, 10).times()
    dvt = [powerlaw_eval(model, xi, x) for x in t]
    trace = DegradationTrace(t, t, dvt, [Phase.STRESS] * len(t))
    got = ttf_project(trace, tol).ttf
    want = (tol / model.c0 / xi ** model.m) ** (1 / model.alpha)
    err = abs(got / want - 1)
    accept(7, err <= 0.01, f"ttf {got:.6g} vs closed form {want:.6g}, rel err {err:.3g} (<= 1%)")
    assert err <= 0.01


def test_c08_temperature(accept, tmp_path):
    cold = _run_scenario("default_dc", tmp_path)
    hot = _run_scenario("default_dc_hot", tmp_path)
    sat = gen_ensemble(EnsembleGenSpec(), 1).saturation
    t90_cold = time_to_fraction(cold, 0.9, sat)
    t90_hot = time_to_fraction(hot, 0.9, sat)
    peak_cold, peak_hot = peak_metrics(cold).t_peak, peak_metrics(hot).t_peak

    deep_cold = peak_metrics(_run_scenario("deep_trap_dc", tmp_path))
    deep_hot = peak_metrics(_run_scenario("deep_trap_dc_hot", tmp_path))
    rec = [(t, deep_cold.recovered_fraction(t), deep_hot.recovered_fraction(t)) for t in (1.0, 10.0, 100.0, 1000.0)]
    ok = t90_hot < t90_cold and peak_hot < peak_cold and all(h < c for _, c, h in rec)
    accept(8, ok, f"t90 {t90_hot:.3g} s (398 K) < {t90_cold:.3g} s (298 K); t_peak {peak_hot:.4g} < {peak_cold:.4g} s; "
           + ", ".join(f"recovered@{t:g}s {h:.3f} < {c:.3f}" for t, c, h in rec))
    assert t90_hot < t90_cold
    assert peak_hot < peak_cold
    assert all(h < c for _, c, h in rec)


def test_c09_ambient_cdf(accept, tmp_path, capsys):
    rc = main(["cdf", "--in", str(scenarios.path("ambient_sinx.csv")), "--out", str(tmp_path / "cdf.csv"),
               "--baseline", str(scenarios.path("ambient_baseline.csv"))])
    out = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
    med, base, ratio = float(out["median_mv"]), float(out["baseline_median_mv"]), float(out["improvement_ratio"])
    ok = rc == 0 and med == 54.0 and base == 450.0 and abs(ratio - 8.33) <= 0.01
    accept(9, ok, f"medians {base:g} / {med:g} mV, ratio {ratio:.4f} (8.33 +- 0.01)")
    assert ok


def _cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "btiage", *args], cwd=cwd, capture_output=True, text=True)


def test_c10_determinism(accept, tmp_path):
    cfg = str(scenarios.path("calibration_ac_d50.cfg"))
    sinx, base = str(scenarios.path("ambient_sinx.csv")), str(scenarios.path("ambient_baseline.csv"))
    duty_in = tmp_path / "duty.csv"
    duty_in.write_text("duty,delta_vt_v\n" + "".join(f"{d},{0.01 * math.log1p(20 * d / (1 - d))}\n"
                                                      for d in (0.1, 0.3, 0.5, 0.7, 0.9)))
    commands = {
        "simulate": ["simulate", "--config", cfg, "--out", "{o}/sim.csv"],
        "gen-ensemble": ["gen-ensemble", "--config", cfg, "--out", "{o}/ens.csv"],
        "fit": ["fit", "duty", "--in", str(duty_in), "--out", "{o}/fit.json"],
        "ttf": ["ttf", "--trace", "{o}/sim.csv", "--tolerance-mv", "50", "--out", "{o}/ttf.json"],
        "cdf": ["cdf", "--in", sinx, "--baseline", base, "--out", "{o}/cdf.csv"],
        "dit": ["dit", "--ss-mv-dec", "150", "--temp-k", "300", "--cox-f-cm2", "1.5e-6"],
    }
    runs = []
    for r in (1, 2):
        d = tmp_path / f"run{r}"
        d.mkdir()
        res = {}
        for name, args in commands.items():
            p = _cli([a.format(o=d) for a in args], tmp_path)
            assert p.returncode == 0, p.stderr
            res[name] = p.stdout.replace(str(d), "<dir>")
        res.update({f.name: f.read_bytes() for f in sorted(d.iterdir())})
        runs.append(res)
    same_cli = runs[0] == runs[1]

    cfgobj = load_config(scenarios.path("calibration_ac_d50.cfg"))
    ens, dev, wf = ensemble_from_config(cfgobj), device_from_config(cfgobj), waveform_from_config(cfgobj)
    grid = LogGrid(1e-4, 1e3, 10)
    serial = simulate(ens, wf, dev, grid=grid)
    parallel = simulate(ens, wf, dev, grid=grid, workers=4)
    same_par = serial.delta_vt.tobytes() == parallel.delta_vt.tobytes()
    accept(10, same_cli and same_par,
           f"{len(commands)} commands byte-identical across reruns: {same_cli}; serial == 4-thread bitwise: {same_par}")
    assert same_cli and same_par


def test_c11_physical_mapping_identity(accept):
    rng = np.random.Generator(np.random.Philox(11))
    worst = 0.0
    for _ in range(1000):
        lg = lambda lo, hi: 10.0 ** rng.uniform(lo, hi)
        p = TrapPhysicalParams(d_ot=lg(17, 21), x_o=lg(-8, -6), c_ox=lg(-7, -5), e_window=lg(-2, 0),
                               tau_oc=lg(-6, 3), tau_oe=lg(-6, 3))
        model = dutycycle_from_physical(p)
        ts, tr = lg(-9, 0), lg(-9, 0)
        want = physical_duty_direct(p.d_ot, p.x_o, p.c_ox, p.e_window, p.tau_oc, p.tau_oe, ts, tr)
        got = dutycycle_eval_times(model, ts, tr)
        # duty form on a unit period: t_stress = D, t_relax = 1 - D
        d = rng.uniform(0.01, 0.99)
        want_d = physical_duty_direct(p.d_ot, p.x_o, p.c_ox, p.e_window, p.tau_oc, p.tau_oe, d, 1.0 - d)
        got_d = dutycycle_eval(model, d)
        worst = max(worst, abs(got - want) / want, abs(got_d - want_d) / want_d)
    accept(11, worst <= 1e-12, f"max rel diff {worst:.3g} over 1000 parameter sets (<= 1e-12)")
    assert worst <= 1e-12
