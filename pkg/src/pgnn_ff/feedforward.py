"""Inversion-based feedforward from an identified inverse model."""
from __future__ import annotations

import numpy as np

from .basis import BasisMap, eval_basis_matrix, nn_inputs
from .core import Regressor, RegressorSpec, regressor_matrix, valid_sample_range
from .errors import DivergenceError
from .training import Rows, predict_rows


def ff_regressor(reference, u_ff_history, t: int, spec: RegressorSpec) -> Regressor:
    """[r(t+n_a), ..., r(t-n_b), u_ff(t-1), ..., u_ff(t-n_c)].

    Feedforward history before t=0 reads as zero; reference indices outside
    the recording take the nearest end sample (references start and end at rest).
    """
    r = np.asarray(getattr(reference, "r", reference), dtype=float)
    hist = np.asarray(u_ff_history, dtype=float)
    idx = np.clip(np.arange(t + spec.n_a, t - spec.n_b - 1, -1), 0, r.size - 1)
    lags = [hist[k] if 0 <= k < hist.size else 0.0 for k in range(t - 1, t - spec.n_c - 1, -1)]
    return Regressor(np.concatenate([r[idx], np.array(lags, dtype=float)]), t)


def _predict(model, bmap: BasisMap, Phi: np.ndarray) -> np.ndarray:
    T = eval_basis_matrix(bmap, Phi)
    with np.errstate(over="ignore", invalid="ignore"):  # reported as DivergenceError
        return predict_rows(model, Rows(T, nn_inputs(bmap, Phi, T), np.zeros(T.shape[0])))


def generate_ff(model, bmap: BasisMap, spec: RegressorSpec, reference) -> np.ndarray:
    """u_ff(t) = u_hat(theta, phi_ff(t)) along the reference.

    Runs over the samples with a full reference window; the first n_b and
    last n_a samples hold the nearest computed value.
    """
    bmap.check_spec(spec)
    r = np.asarray(getattr(reference, "r", reference), dtype=float)
    n = r.size
    t_min = spec.n_b
    t_max = n - 1 - spec.n_a
    valid_sample_range(RegressorSpec(spec.n_a, spec.n_b, 0, spec.Ts), n)
    u_ff = np.zeros(n)
    if spec.n_c == 0:
        Phi = regressor_matrix(r, np.zeros(n), spec, t_min, t_max)
        u_ff[t_min : t_max + 1] = _predict(model, bmap, Phi)
    else:
        for t in range(t_min, t_max + 1):
            phi = ff_regressor(r, u_ff, t, spec).phi
            u_ff[t] = _predict(model, bmap, phi[None, :])[0]
            if not np.isfinite(u_ff[t]):
                raise DivergenceError(f"feedforward recursion became non-finite at sample {t}")
    if not np.all(np.isfinite(u_ff[t_min : t_max + 1])):
        bad = t_min + int(np.argmin(np.isfinite(u_ff[t_min : t_max + 1])))
        raise DivergenceError(f"non-finite feedforward at sample {bad}")
    u_ff[:t_min] = u_ff[t_min]
    u_ff[t_max + 1 :] = u_ff[t_max]
    return u_ff
