"""Shared data model: datasets, regressor windows and parameter containers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DatasetTooShortError, DimensionError, IndexRangeError


def _frozen_array(x, ndim=None, name="array") -> np.ndarray:
    a = np.array(x, dtype=float)
    if ndim is not None and a.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RegressorSpec:
    """Orders of the inverse-dynamics regressor.

    The window is ``[y(t+n_a), ..., y(t-n_b), u(t-1), ..., u(t-n_c)]``.
    """

    n_a: int = 0
    n_b: int = 2
    n_c: int = 0
    Ts: float = 1e-4

    def __post_init__(self):
        for name in ("n_a", "n_b", "n_c"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {v}")
        if not self.Ts > 0:
            raise ValueError(f"Ts must be positive, got {self.Ts}")

    @property
    def length(self) -> int:
        return self.n_a + self.n_b + 1 + self.n_c

    def to_dict(self) -> dict:
        return {"n_a": self.n_a, "n_b": self.n_b, "n_c": self.n_c, "Ts": self.Ts}


CLM_SPEC = RegressorSpec(0, 2, 0, 1e-4)


@dataclass(frozen=True)
class Dataset:
    """Recorded input/output sequences at a fixed sampling time."""

    u: np.ndarray
    y: np.ndarray
    Ts: float

    def __post_init__(self):
        u = _frozen_array(self.u, 1, "u")
        y = _frozen_array(self.y, 1, "y")
        if u.shape != y.shape:
            raise DimensionError(f"u and y lengths differ: {u.size} vs {y.size}")
        if u.size < 1:
            raise DatasetTooShortError("dataset is empty")
        if not self.Ts > 0:
            raise ValueError(f"Ts must be positive, got {self.Ts}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.u.size


class Regressor(NamedTuple):
    phi: np.ndarray
    t: int


def valid_sample_range(spec: RegressorSpec, N: int) -> tuple[int, int]:
    """Inclusive index range on which a full regressor window exists."""
    t_min = max(spec.n_b, spec.n_c)
    t_max = N - 1 - spec.n_a
    if t_min > t_max:
        raise DatasetTooShortError(
            f"dataset of length {N} too short for orders "
            f"(n_a={spec.n_a}, n_b={spec.n_b}, n_c={spec.n_c})"
        )
    return t_min, t_max


def build_regressor(dataset: Dataset, t: int, spec: RegressorSpec) -> Regressor:
    N = len(dataset)
    if t - spec.n_b < 0 or t - spec.n_c < 0 or t + spec.n_a > N - 1:
        raise IndexRangeError(f"regressor window at t={t} leaves [0, {N - 1}]")
    ys = dataset.y[t - spec.n_b : t + spec.n_a + 1][::-1]
    us = dataset.u[t - spec.n_c : t][::-1]
    return Regressor(np.concatenate([ys, us]), t)


def regressor_matrix(y, u, spec: RegressorSpec, t_min: int, t_max: int) -> np.ndarray:
    """All regressors for t in [t_min, t_max], one per row (vectorised build_regressor)."""
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    t = np.arange(t_min, t_max + 1)
    cols = [y[t + k] for k in range(spec.n_a, -spec.n_b - 1, -1)]
    cols += [u[t - k] for k in range(1, spec.n_c + 1)]
    return np.column_stack(cols) if cols else np.empty((t.size, 0))


def dataset_regressors(dataset: Dataset, spec: RegressorSpec) -> tuple[np.ndarray, np.ndarray]:
    """Regressor rows and aligned targets u(t) over the valid sample range."""
    t_min, t_max = valid_sample_range(spec, len(dataset))
    Phi = regressor_matrix(dataset.y, dataset.u, spec, t_min, t_max)
    return Phi, dataset.u[t_min : t_max + 1]


@dataclass(frozen=True)
class LipParams:
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen_array(self.theta, 1, "theta"))


@dataclass(frozen=True)
class NNLayer:
    W: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        W = _frozen_array(self.W, 2, "W")
        B = _frozen_array(self.B, 1, "B")
        if W.shape[0] != B.size:
            raise DimensionError(f"W has {W.shape[0]} rows but B has {B.size} entries")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "B", B)

    @property
    def width(self) -> int:
        return self.B.size


ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class NNParams:
    """Hidden layers followed by a width-1 affine output layer."""

    layers: tuple
    activation: str = "tanh"

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DimensionError("network needs at least an output layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.W.shape[1] != prev.width:
                raise DimensionError(
                    f"layer widths do not chain: {prev.width} -> {nxt.W.shape[1]}"
                )
        if layers[-1].width != 1:
            raise DimensionError("output layer must have width 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "layers", layers)

    @property
    def hidden(self) -> tuple:
        return self.layers[:-1]

    @property
    def output(self) -> NNLayer:
        return self.layers[-1]

    @property
    def n_in(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def widths(self) -> list[int]:
        return [self.n_in] + [layer.width for layer in self.layers]

    def with_output(self, W, B) -> "NNParams":
        return NNParams(self.layers[:-1] + (NNLayer(np.reshape(W, (1, -1)), np.reshape(B, (1,))),),
                        self.activation)


@dataclass(frozen=True)
class PGNNParams:
    """Physical layer ``theta_phy`` in parallel with a network.

    ``input_scaling`` multiplies the network input entry-wise.  With
    ``nn_only`` set the physical layer is excluded from the prediction
    (black-box network trained with a physics penalty).
    """

    nn: NNParams
    theta_phy: np.ndarray
    input_scaling: np.ndarray = field(default=None)
    nn_only: bool = False

    def __post_init__(self):
        object.__setattr__(self, "theta_phy", _frozen_array(self.theta_phy, 1, "theta_phy"))
        scaling = np.ones(self.nn.n_in) if self.input_scaling is None else self.input_scaling
        scaling = _frozen_array(scaling, 1, "input_scaling")
        if scaling.size != self.nn.n_in:
            raise DimensionError(
                f"input_scaling has {scaling.size} entries, network expects {self.nn.n_in}"
            )
        object.__setattr__(self, "input_scaling", scaling)


def flatten_nn(nn: NNParams) -> np.ndarray:
    parts = []
    for layer in nn.layers:
        parts.append(layer.W.ravel())
        parts.append(layer.B)
    return np.concatenate(parts)


def unflatten_nn(vec: Sequence[float], widths: Sequence[int], activation="tanh") -> NNParams:
    vec = np.asarray(vec, dtype=float)
    layers, k = [], 0
    for fan_in, width in zip(widths[:-1], widths[1:]):
        W = vec[k : k + width * fan_in].reshape(width, fan_in)
        k += width * fan_in
        B = vec[k : k + width]
        k += width
        layers.append(NNLayer(W, B))
    if k != vec.size:
        raise DimensionError(f"parameter vector has {vec.size} entries, expected {k}")
    return NNParams(tuple(layers), activation)


def flatten_pgnn(model: PGNNParams) -> np.ndarray:
    return np.concatenate([flatten_nn(model.nn), model.theta_phy])


def unflatten_pgnn(vec, like: PGNNParams) -> PGNNParams:
    vec = np.asarray(vec, dtype=float)
    n_phy = like.theta_phy.size
    split = vec.size - n_phy
    nn = unflatten_nn(vec[:split], like.nn.widths, like.nn.activation)
    return PGNNParams(nn, vec[split:], like.input_scaling, like.nn_only)


@dataclass(frozen=True)
class TrackingResult:
    """Tracking error r(t) - y(t) of one closed-loop run and its mean absolute value."""

    e: np.ndarray
    mae: float
    reference_id: str = ""
    model_id: str = ""

    @classmethod
    def from_errors(cls, e, reference_id="", model_id="") -> "TrackingResult":
        e = _frozen_array(e, 1, "e")
        if e.size < 1:
            raise ValueError("empty error sequence")
        return cls(e, float(np.mean(np.abs(e))), reference_id, model_id)
