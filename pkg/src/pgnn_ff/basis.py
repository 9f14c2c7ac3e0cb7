"""Physical basis maps (known-physics features of the regressor)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Regressor, RegressorSpec
from .errors import DimensionError


def delta(y_t, y_tm1, Ts):
    """Backward-Euler difference (1 - q^-1)/Ts."""
    if not Ts > 0:
        raise ValueError(f"Ts must be positive, got {Ts}")
    return (y_t - y_tm1) / Ts


def delta2(y_t, y_tm1, y_tm2, Ts):
    return delta(delta(y_t, y_tm1, Ts), delta(y_tm1, y_tm2, Ts), Ts)


def clm_features(Phi: np.ndarray, Ts: float) -> np.ndarray:
    """[d2y, dy, sign(dy), y] for rows [y(t), y(t-1), y(t-2)]."""
    y0, y1, y2 = Phi[:, 0], Phi[:, 1], Phi[:, 2]
    v = delta(y0, y1, Ts)
    # difference the velocities (not y0 - 2 y1 + y2) so the result is exactly delta(delta(.))
    a = delta(v, delta(y1, y2, Ts), Ts)
    return np.column_stack([a, v, np.sign(v), y0])


@dataclass(frozen=True)
class _Registered:
    func: Callable
    n_out: int
    spec: RegressorSpec | None


_REGISTRY: dict[str, _Registered] = {}


def register_basis(kind: str, func: Callable, n_out: int, spec: RegressorSpec | None = None):
    """Register a pure feature map ``func(Phi, Ts) -> (n, n_out)`` under ``kind``.

    ``spec`` pins the regressor orders the map needs (``Ts`` is not compared);
    ``None`` accepts any orders.
    """
    if n_out < 1:
        raise ValueError("n_out must be >= 1")
    _REGISTRY[kind] = _Registered(func, int(n_out), spec)


register_basis("clm", clm_features, 4, RegressorSpec(0, 2, 0))


@dataclass(frozen=True)
class BasisMap:
    kind: str
    Ts: float
    # network sees the basis features ("basis") or the raw regressor ("regressor")
    nn_input: str = "basis"

    def __post_init__(self):
        if self.kind not in _REGISTRY:
            raise ValueError(f"unknown basis kind {self.kind!r}; registered: {sorted(_REGISTRY)}")
        if not self.Ts > 0:
            raise ValueError(f"Ts must be positive, got {self.Ts}")
        if self.nn_input not in ("basis", "regressor"):
            raise ValueError(f"nn_input must be 'basis' or 'regressor', got {self.nn_input!r}")

    @property
    def n_out(self) -> int:
        return _REGISTRY[self.kind].n_out

    def check_spec(self, spec: RegressorSpec):
        req = _REGISTRY[self.kind].spec
        if req is not None and (req.n_a, req.n_b, req.n_c) != (spec.n_a, spec.n_b, spec.n_c):
            raise DimensionError(
                f"basis {self.kind!r} needs orders (n_a, n_b, n_c)="
                f"{(req.n_a, req.n_b, req.n_c)}, got {(spec.n_a, spec.n_b, spec.n_c)}"
            )


def eval_basis_matrix(bmap: BasisMap, Phi: np.ndarray) -> np.ndarray:
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    entry = _REGISTRY[bmap.kind]
    if entry.spec is not None and Phi.shape[1] != entry.spec.length:
        raise DimensionError(
            f"basis {bmap.kind!r} expects regressors of length {entry.spec.length}, got {Phi.shape[1]}"
        )
    out = np.asarray(entry.func(Phi, bmap.Ts), dtype=float)
    if out.shape != (Phi.shape[0], entry.n_out):
        raise DimensionError(
            f"basis {bmap.kind!r} returned shape {out.shape}, expected {(Phi.shape[0], entry.n_out)}"
        )
    return out


def eval_basis(bmap: BasisMap, phi) -> np.ndarray:
    if isinstance(phi, Regressor):
        phi = phi.phi
    return eval_basis_matrix(bmap, np.asarray(phi, dtype=float)[None, :])[0]


def nn_inputs(bmap: BasisMap, Phi: np.ndarray, T: np.ndarray | None = None) -> np.ndarray:
    """Unscaled network input rows."""
    if bmap.nn_input == "regressor":
        return np.atleast_2d(Phi)
    return eval_basis_matrix(bmap, Phi) if T is None else T
