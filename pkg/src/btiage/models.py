"""Closed-form empirical NBTI models.

Units used throughout: volts, seconds, nanometers for EOT, MV/cm for the
normalized oxide field, F/cm^2 for gate capacitance.

Sign convention: ``powerlaw_eval`` returns the signed (negative) shift; the
duty-cycle and relaxation evaluators return magnitudes / fractions.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

Q_E = 1.602176634e-19  # C
K_B_EV = 8.617333e-5  # eV/K
LN10 = math.log(10.0)


@dataclass(frozen=True)
class PhysicalConstants:
    q: float = Q_E
    k_b: float = K_B_EV


@dataclass(frozen=True)
class DeviceParams:
    eot: float  # nm
    v_t0: float  # V, pre-stress threshold voltage
    c_ox: float  # F/cm^2
    temperature: float  # K

    def __post_init__(self):
        if not self.eot > 0:
            raise ValueError(f"eot must be > 0 nm, got {self.eot}")
        if not self.c_ox > 0:
            raise ValueError(f"c_ox must be > 0, got {self.c_ox}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be > 0 K, got {self.temperature}")


@dataclass(frozen=True)
class PowerLawModel:
    """|dVt| = c0 * |xi|^m * t^alpha."""

    c0: float
    m: float
    alpha: float

    def __post_init__(self):
        if self.c0 < 0:
            raise ValueError("c0 must be >= 0")
        if not self.m > 0:
            raise ValueError("m must be > 0")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DutyCycleLogModel:
    """|dVt| = a * ln(1 + b * D / (1 - D))."""

    a: float
    b: float

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("a must be >= 0")
        if not self.b > 0:
            raise ValueError("b must be > 0")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class TrapPhysicalParams:
    """Physical parameters behind the duty-cycle log model.

    ``d_ot`` is a volumetric density per unit energy (cm^-3 eV^-1): the
    tunneling depth ``x_o`` converts it to an areal charge, and only then
    does q*d_ot*x_o*e_window/c_ox come out in volts.
    """

    d_ot: float  # cm^-3 eV^-1
    x_o: float  # cm
    c_ox: float  # F/cm^2
    e_window: float  # eV, E_F - E_F0
    tau_oc: float  # s
    tau_oe: float  # s

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value}")


@dataclass(frozen=True)
class UniversalRelaxModel:
    """Remaining fraction r = 1 / (1 + b_r * (t_relax / t_stress)^beta)."""

    b_r: float
    beta: float

    def __post_init__(self):
        if not self.b_r > 0:
            raise ValueError("b_r must be > 0")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")

    def to_dict(self):
        return asdict(self)


def normalized_field(v_gs, v_t, eot):
    """Overdrive field (v_gs - v_t) / eot in MV/cm, with eot in nm."""
    if not eot > 0:
        raise ValueError(f"eot must be > 0 nm, got {eot}")
    # 1 V/nm = 10 MV/cm
    return (v_gs - v_t) / eot * 10.0


def powerlaw_eval(model: PowerLawModel, xi, t):
    if t <= 0:
        raise ValueError(f"t must be > 0, got {t}")
    return -model.c0 * abs(xi) ** model.m * t ** model.alpha


def stress_relax_ratio(duty):
    """t_stress / t_relax for a periodic waveform of duty ``duty``."""
    return duty / (1.0 - duty)


def dutycycle_eval(model: DutyCycleLogModel, duty):
    if not 0 <= duty < 1:
        raise ValueError(f"duty must lie in [0, 1), got {duty}")
    return model.a * math.log1p(model.b * stress_relax_ratio(duty))


def dutycycle_eval_times(model: DutyCycleLogModel, t_stress, t_relax):
    """Same model written on the stress/relax portions of one period."""
    if t_stress < 0 or not t_relax > 0:
        raise ValueError("need t_stress >= 0 and t_relax > 0")
    return model.a * math.log1p(model.b * t_stress / t_relax)


def dutycycle_from_physical(p: TrapPhysicalParams) -> DutyCycleLogModel:
    a = Q_E * p.d_ot * p.x_o * p.e_window / p.c_ox
    return DutyCycleLogModel(a=a, b=p.tau_oe / p.tau_oc)


def universal_relax_eval(model: UniversalRelaxModel, t_relax, t_stress):
    if not t_stress > 0:
        raise ValueError(f"t_stress must be > 0, got {t_stress}")
    if t_relax < 0:
        raise ValueError(f"t_relax must be >= 0, got {t_relax}")
    return 1.0 / (1.0 + model.b_r * (t_relax / t_stress) ** model.beta)


def arrhenius_factor(ea, temperature, t_ref):
    """Multiplier exp[(ea/k_B)(1/T - 1/T_ref)] applied to a time constant."""
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0 K, got {temperature}")
    return math.exp(ea / K_B_EV * (1.0 / temperature - 1.0 / t_ref))
