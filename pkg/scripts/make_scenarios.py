"""Regenerate the data files under src/btiage/scenarios/.

    python scripts/make_scenarios.py
"""
from pathlib import Path

import numpy as np

from btiage.io import write_columns, write_ensemble_csv
from btiage.trapsim import EnsembleGenSpec, gen_ensemble

OUT = Path(__file__).resolve().parents[1] / "src" / "btiage" / "scenarios"

# base population = library defaults; the deep population only becomes
# reachable at high temperature (large capture activation energy) and
# empties very slowly once filled
BASE_SEED = 1
DEEP = EnsembleGenSpec(n_traps=200, tau_c_range=(1e4, 1e5), tau_e_range=(1e5, 1e7),
                       total_eta=0.1, ea_capture=0.6, ea_emission=0.1)
DEEP_SEED = 2


def deep_trap_ensemble():
    return gen_ensemble(EnsembleGenSpec(), BASE_SEED) + gen_ensemble(DEEP, DEEP_SEED)


def ambient(median, seed, n=101, sigma=0.6):
    """Lognormal |dVt| samples rescaled so the middle order statistic is ``median``."""
    x = np.sort(np.random.Generator(np.random.Philox(seed)).lognormal(0.0, sigma, n))
    return x / x[n // 2] * median


def main():
    write_ensemble_csv(OUT / "deep_trap_ensemble.csv", deep_trap_ensemble(),
                       {"seed": BASE_SEED, "deep_seed": DEEP_SEED, "config_hash": "none"})
    for name, median, seed in (("ambient_baseline.csv", 0.450, 11), ("ambient_sinx.csv", 0.054, 12)):
        write_columns(OUT / name, ("delta_vt_v",), [(v,) for v in ambient(median, seed)],
                      {"seed": seed, "config_hash": "none", "synthetic_median_v": median})


if __name__ == "__main__":
    main()
