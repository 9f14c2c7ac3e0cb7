import numpy as np
import pytest

from conftest import THETA0
from pgnn_ff.basis import BasisMap, register_basis
from pgnn_ff.core import CLM_SPEC, Dataset, LipParams, RegressorSpec, build_regressor
from pgnn_ff.errors import DivergenceError
from pgnn_ff.feedforward import ff_regressor, generate_ff
from pgnn_ff.nn import init_hidden_random
from pgnn_ff.core import PGNNParams
from pgnn_ff.plant import GSpec, PlantConfig, run_closed_loop
from pgnn_ff.trajectory import preset

TOY_SPEC = RegressorSpec(0, 0, 1, 1e-4)
register_basis("test_lagged", lambda Phi, Ts: Phi.copy(), 2, RegressorSpec(0, 0, 1))
TOY = BasisMap("test_lagged", 1e-4)


def test_zero_reference_zero_model(bmap):
    model = PGNNParams(init_hidden_random([4, 8], 0), np.zeros(4))
    assert np.all(generate_ff(model, bmap, CLM_SPEC, np.zeros(50)) == 0.0)


def test_homogeneous_lip_on_zero_reference(bmap):
    assert np.all(generate_ff(LipParams(THETA0), bmap, CLM_SPEC, np.zeros(30)) == 0.0)


def test_clm_lip_pointwise_formula(bmap):
    ref = preset("r1")
    r = ref.r
    u = generate_ff(LipParams(THETA0), bmap, CLM_SPEC, ref)
    m, fv, fc, fk = THETA0
    Ts = ref.Ts
    idx = np.random.default_rng(0).choice(np.arange(2, r.size), 2000, replace=False)
    for t in idx:
        v = (r[t] - r[t - 1]) / Ts
        a = (v - (r[t - 1] - r[t - 2]) / Ts) / Ts
        want = m * a + fv * v + fc * np.sign(v) + fk * r[t]
        assert u[t] == pytest.approx(want, rel=1e-12, abs=1e-9)
    assert u[0] == u[1] == u[2]


def test_lagged_toy_recursion_unrolled():
    r = np.array([1.0, 2.0, -1.0, 0.5, 3.0])
    u = generate_ff(LipParams([1.0, 0.5]), TOY, TOY_SPEC, r)
    want, prev = [], 0.0
    for rt in r:
        prev = rt + 0.5 * prev
        want.append(prev)
    assert u.tolist() == want


def test_unstable_inverse_aborts():
    with pytest.raises(DivergenceError):
        generate_ff(LipParams([1.0, 10.0]), TOY, TOY_SPEC, np.ones(400))


def test_ff_regressor_cases():
    r = np.arange(10.0)
    phi = ff_regressor(r, np.zeros(0), 0, RegressorSpec(0, 0, 2))
    assert phi.phi.tolist() == [0.0, 0.0, 0.0]
    hist = np.array([5.0, 6.0, 7.0, 8.0])
    spec = RegressorSpec(0, 2, 2)
    d = Dataset(hist.tolist() + [0.0] * 6, r, 1e-4)
    assert np.array_equal(ff_regressor(r, hist, 3, spec).phi, build_regressor(d, 3, spec).phi)
    lead = ff_regressor(r, hist, 4, RegressorSpec(1, 0, 0))
    assert lead.phi.tolist() == [5.0, 4.0]


def test_perfect_inverse_cancels_tracking_error(bmap):
    cfg = PlantConfig(g=GSpec(kind="none"), encoder_resolution=0.0)
    ref = preset("r1")
    ff = generate_ff(LipParams(cfg.theta0), bmap, CLM_SPEC, ref)
    _, tr = run_closed_loop(ref, ff, cfg)
    assert np.mean(np.abs(tr.e[3:])) <= 1e-9
