import numpy as np
import pytest

from pgnn_ff.basis import BasisMap
from pgnn_ff.core import CLM_SPEC, Dataset
from pgnn_ff.plant import GSpec, PlantConfig, run_closed_loop
from pgnn_ff.trajectory import DEFAULT_BOUNDS, back_and_forth, preset

THETA0 = np.array([18.8, 172.0, 7.21, 1.36e-8])


@pytest.fixture(scope="session")
def bmap():
    return BasisMap("clm", CLM_SPEC.Ts)


def random_clm_dataset(rng, n=500, Ts=1e-4):
    """Smooth random position record with a random input."""
    y = np.cumsum(np.cumsum(rng.normal(0, 1e-7, n)))
    u = rng.normal(0, 10, n)
    return Dataset(u, y, Ts)


def short_reference(Ts=1e-4, dwell=0.0):
    """One stroke out and back, dwell-free so the carriage never sticks."""
    return back_and_forth([0.0, 0.02, 0.0], DEFAULT_BOUNDS, Ts, dwell, "short")


@pytest.fixture(scope="session")
def ident_data():
    """Identification data from the default plant on r1 (dither on, exact positions)."""
    cfg = PlantConfig(encoder_resolution=0.0)
    data, _ = run_closed_loop(preset("r1"), None, cfg, dither=True)
    return data


@pytest.fixture(scope="session")
def lip_free_data():
    """g = 0 plant, dwell-free reference, exact positions."""
    cfg = PlantConfig(g=GSpec(kind="none"), encoder_resolution=0.0)
    ref = back_and_forth([-0.1, 0.1, -0.1], DEFAULT_BOUNDS, cfg.Ts, 0.0, "bf")
    data, _ = run_closed_loop(ref, None, cfg, dither=True)
    return data


QUICK_TOML = """\
seed = 3
[reference]
dwell = 0.01
[training]
max_iter = 20
subsample = 40
[experiment]
nl_values = [4]
n_seeds = 1
sweep_lambdas = [0.0, 0.01]
trace_stride = 50
"""
