"""Jerk-limited (third-order) point-to-point references."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

# Internal limits sit this fraction below the requested bounds so that
# float rounding in third differences (~1e-3 m/s^3 at 10 kHz) never
# pushes an observed derivative over a bound.
LIMIT_MARGIN = 1e-5


@dataclass(frozen=True)
class Bounds:
    vmax: float
    amax: float
    jmax: float

    def __post_init__(self):
        if not (self.vmax > 0 and self.amax > 0 and self.jmax > 0):
            raise ValueError(f"bounds must be positive, got {self}")


DEFAULT_BOUNDS = Bounds(0.05, 4.0, 1000.0)


@dataclass(frozen=True)
class ReferenceProfile:
    r: np.ndarray
    Ts: float
    bounds: Bounds
    name: str = ""

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        r.flags.writeable = False
        object.__setattr__(self, "r", r)

    def __len__(self):
        return self.r.size


def _segments(distance: float, b: Bounds):
    """Durations and jerks of the seven phases for a rest-to-rest move of ``distance`` > 0."""
    V = b.vmax * (1 - LIMIT_MARGIN)
    A = b.amax * (1 - LIMIT_MARGIN)
    J = b.jmax * (1 - LIMIT_MARGIN)

    def accel_phase(v):
        if v * J >= A * A:
            tj = A / J
            return tj, v / A + tj
        tj = math.sqrt(v / J)
        return tj, 2 * tj

    tj, ta = accel_phase(V)
    if V * ta <= distance:
        tv = (distance - V * ta) / V
    else:
        # cruise speed not reachable: shrink it until accel + decel cover the distance
        v = (-A * A / J + math.sqrt(A**4 / J**2 + 4 * distance * A)) / 2
        if v < A * A / J:
            v = (distance * distance * J / 4) ** (1 / 3)
        tj, ta = accel_phase(v)
        tv = 0.0
    tc = ta - 2 * tj
    return [(tj, J), (tc, 0.0), (tj, -J), (tv, 0.0), (tj, -J), (tc, 0.0), (tj, J)]


def _sample_move(distance: float, b: Bounds, Ts: float) -> np.ndarray:
    """Travelled distance sampled at k*Ts, k = 0..ceil(T/Ts); the last sample is exactly ``distance``."""
    segs = [(d, j) for d, j in _segments(distance, b) if d > 0]
    starts, states = [], []
    t = s = v = a = 0.0
    for d, j in segs:
        starts.append(t)
        states.append((s, v, a, j))
        s, v, a = s + v * d + a * d * d / 2 + j * d**3 / 6, v + a * d + j * d * d / 2, a + j * d
        t += d
    total = t
    K = math.ceil(total / Ts - 1e-12)
    tk = np.arange(K + 1) * Ts
    idx = np.clip(np.searchsorted(starts, tk, side="right") - 1, 0, len(segs) - 1)
    st = np.array(states)[idx]
    tau = tk - np.array(starts)[idx]
    out = st[:, 0] + st[:, 1] * tau + st[:, 2] * tau**2 / 2 + st[:, 3] * tau**3 / 6
    out[tk >= total] = distance
    out[-1] = distance
    return out


def make_point_to_point(start: float, end: float, bounds: Bounds, Ts: float, dwell: float = 0.0,
                        name: str = "") -> ReferenceProfile:
    """Seven-segment S-curve from rest at ``start`` to rest at ``end``, then ``dwell`` seconds at ``end``.

    Short moves degrade to profiles that never reach vmax (and possibly amax).
    """
    if not Ts > 0:
        raise ValueError(f"Ts must be positive, got {Ts}")
    if not dwell >= 0:
        raise ValueError(f"dwell must be >= 0, got {dwell}")
    n_dwell = int(round(dwell / Ts))
    D = end - start
    if D == 0:
        return ReferenceProfile(np.full(max(n_dwell, 1), float(start)), Ts, bounds, name)
    s = _sample_move(abs(D), bounds, Ts)
    r = start + math.copysign(1.0, D) * s
    r[-1] = end
    return ReferenceProfile(np.concatenate([r, np.full(n_dwell, float(end))]), Ts, bounds, name)


def concat_profiles(profiles: Sequence[ReferenceProfile], name: str = "") -> ReferenceProfile:
    """Join profiles end to start, dropping each junction's duplicate sample."""
    first = profiles[0]
    parts = [first.r]
    for prev, nxt in zip(profiles, profiles[1:]):
        if nxt.Ts != first.Ts:
            raise ValueError("profiles have different sampling times")
        if nxt.r[0] != prev.r[-1]:
            raise ValueError(f"profiles do not join: {prev.r[-1]} != {nxt.r[0]}")
        parts.append(nxt.r[1:])
    return ReferenceProfile(np.concatenate(parts), first.Ts, first.bounds, name)


def back_and_forth(points: Sequence[float], bounds: Bounds, Ts: float, dwell: float,
                   name: str = "") -> ReferenceProfile:
    """Rest at points[0] for ``dwell``, then move through the points, dwelling after each."""
    profiles = [make_point_to_point(points[0], points[0], bounds, Ts, dwell)]
    profiles += [make_point_to_point(a, b, bounds, Ts, dwell) for a, b in zip(points, points[1:])]
    return concat_profiles(profiles, name)


PRESETS = {
    # four full strokes over the training range
    "r1": [-0.1, 0.1, -0.1, 0.1, -0.1],
    # partly outside the training range
    "r2": [0.0, 0.17, 0.0, 0.17, 0.0],
}


def preset(name: str, Ts: float = 1e-4, bounds: Bounds = DEFAULT_BOUNDS, dwell: float = 0.2) -> ReferenceProfile:
    try:
        points = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown reference preset {name!r}; choose from {sorted(PRESETS)}") from None
    return back_and_forth(points, bounds, Ts, dwell, name)


class DerivativeReport(NamedTuple):
    vmax_obs: float
    amax_obs: float
    jmax_obs: float


def discrete_derivative_check(profile: ReferenceProfile) -> DerivativeReport:
    """Largest backward-difference velocity, acceleration and jerk."""
    r = profile.r
    if r.size < 4:
        raise ValueError(f"profile needs at least 4 samples, got {r.size}")
    Ts = profile.Ts
    v = np.diff(r) / Ts
    a = np.diff(v) / Ts
    j = np.diff(a) / Ts
    return DerivativeReport(float(np.max(np.abs(v))), float(np.max(np.abs(a))), float(np.max(np.abs(j))))
