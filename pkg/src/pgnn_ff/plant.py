"""Discrete-time coreless linear motor simulator with PID feedback, dither and encoder quantisation.

The update solves

    u(t) = m d2y(t) + fv dy(t) + fc sign(dy(t)) + fk y(t) + g(y(t-1), dy(t-1))

for y(t) exactly (d = backward Euler), so recorded data satisfy the CLM
basis model with no discretisation mismatch.  The linear terms and the
Coulomb term are implicit; the unknown force g is taken at the previous
sample, which keeps the step explicit while g stays a function of the
regressor [y(t), y(t-1), y(t-2)].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import Dataset, TrackingResult
from .errors import DimensionError, DivergenceError

Y_LIMIT = 10.0


@dataclass(frozen=True)
class GSpec:
    """Unknown force g(y, v).

    kinds: ``none``; ``default`` = A sin(2 pi y / P) + B tanh(v / v0);
    ``mlp`` = amplitude * (random tanh network of [y / y_scale, v / v_scale]).
    """

    kind: str = "default"
    A: float = 5.0
    P: float = 0.1
    B: float = 2.0
    v0: float = 0.01
    hidden: int = 16
    mlp_seed: int = 12345
    amplitude: float = 1.0
    y_scale: float = 0.1
    v_scale: float = 0.05

    def __post_init__(self):
        if self.kind not in ("none", "default", "mlp"):
            raise ValueError(f"g kind must be none, default or mlp, got {self.kind!r}")
        if self.kind == "default" and not (self.P > 0 and self.v0 > 0):
            raise ValueError("default g needs P > 0 and v0 > 0")

    def mlp_weights(self):
        rng = np.random.default_rng(self.mlp_seed)
        W = rng.uniform(-1.5, 1.5, size=(self.hidden, 2))
        b = rng.uniform(-0.5, 0.5, size=self.hidden)
        w = rng.uniform(-1.0, 1.0, size=self.hidden) / math.sqrt(self.hidden)
        return W, b, w


@dataclass(frozen=True)
class PIDGains:
    kp: float
    ki: float
    kd: float
    i_clamp: float = 1000.0  # bound on |ki * integral| in N

    @classmethod
    def for_mass(cls, m: float, bandwidth_hz: float = 50.0, zeta: float = 0.7,
                 integral_hz: float = 5.0, i_clamp: float = 1000.0) -> "PIDGains":
        w = 2 * math.pi * bandwidth_hz
        kp = m * w * w
        return cls(kp, kp * 2 * math.pi * integral_hz, 2 * zeta * m * w, i_clamp)


@dataclass(frozen=True)
class PlantConfig:
    m: float = 18.8
    fv: float = 172.0
    fc: float = 7.21
    fk: float = 1.36e-8
    g: GSpec = field(default_factory=GSpec)
    Ts: float = 1e-4
    encoder_resolution: float = 0.5e-5
    dither_sigma: float = 50.0
    controller: PIDGains | None = None  # None: PIDGains.for_mass(m)
    seed: int = 0

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"m must be positive, got {self.m}")
        if not self.Ts > 0:
            raise ValueError(f"Ts must be positive, got {self.Ts}")
        if not self.encoder_resolution >= 0:
            raise ValueError(f"encoder_resolution must be >= 0, got {self.encoder_resolution}")
        if not self.dither_sigma >= 0:
            raise ValueError(f"dither_sigma must be >= 0, got {self.dither_sigma}")
        for name in ("fv", "fc", "fk"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.controller is None:
            object.__setattr__(self, "controller", PIDGains.for_mass(self.m))

    @property
    def theta0(self) -> np.ndarray:
        return np.array([self.m, self.fv, self.fc, self.fk])


class SimState(NamedTuple):
    y_prev: float = 0.0
    y_prev2: float = 0.0
    integral: float = 0.0
    e_prev: float = 0.0


def make_g(spec: GSpec):
    """Scalar g(y, v) as a plain closure (used inside the per-sample loop)."""
    if spec.kind == "none":
        return lambda y, v: 0.0
    if spec.kind == "default":
        A, B, k, v0 = spec.A, spec.B, 2 * math.pi / spec.P, spec.v0
        sin, tanh = math.sin, math.tanh
        return lambda y, v: A * sin(k * y) + B * tanh(v / v0)
    W, b, w = spec.mlp_weights()
    rows = [(float(W[i, 0]) / spec.y_scale, float(W[i, 1]) / spec.v_scale, float(b[i]), float(w[i]))
            for i in range(spec.hidden)]
    amp, tanh = spec.amplitude, math.tanh

    def g(y, v):
        return amp * sum(wi * tanh(a * y + c * v + bi) for a, c, bi, wi in rows)

    return g


def g_true(cfg: PlantConfig, y: float, v: float) -> float:
    return make_g(cfg.g)(y, v)


def _step(y1, y2, u, m, fv, fc, fk, Ts, g):
    v1 = (y1 - y2) / Ts
    # net force beyond what holds the carriage at y1 (cancellation-free form)
    F = u + m * v1 / Ts - fk * y1 - g(y1, v1)
    gain = m / (Ts * Ts) + fv / Ts + fk
    if F > fc:
        return y1 + (F - fc) / gain
    if F < -fc:
        return y1 + (F + fc) / gain
    return y1  # static friction holds


def plant_step(state: SimState, u_total: float, cfg: PlantConfig, g=None):
    g = make_g(cfg.g) if g is None else g
    y = _step(state.y_prev, state.y_prev2, float(u_total), cfg.m, cfg.fv, cfg.fc, cfg.fk, cfg.Ts, g)
    if not abs(y) <= Y_LIMIT:
        raise DivergenceError(f"plant position {y} beyond +-{Y_LIMIT} m (u={u_total}, state={state})")
    return y, state._replace(y_prev=y, y_prev2=state.y_prev)


def feedback_control(state: SimState, r: float, y_meas: float, cfg: PlantConfig):
    """Discrete PID on e = r - y_meas with a clamped integrator; returns (force, state')."""
    c = cfg.controller
    e = r - y_meas
    integral = state.integral + e * cfg.Ts
    if c.ki > 0:
        bound = c.i_clamp / c.ki
        integral = min(max(integral, -bound), bound)
    u = c.kp * e + c.ki * integral + c.kd * (e - state.e_prev) / cfg.Ts
    return u, state._replace(integral=integral, e_prev=e)


def quantize(y, resolution: float):
    if resolution <= 0:
        return y
    return np.round(np.asarray(y) / resolution) * resolution


def dither_sequence(cfg: PlantConfig, n: int) -> np.ndarray:
    return np.random.default_rng(cfg.seed).normal(0.0, cfg.dither_sigma, n)


def run_closed_loop(reference, ff, cfg: PlantConfig, dither: bool = False,
                    reference_id: str = "", model_id: str = ""):
    """Simulate the feedback loop along a reference.

    At sample t the controller sees the latest measurement q(y(t-1)) against
    r(t-1); the applied force u(t) = u_fb + ff(t) + dither(t) produces y(t).
    Starts at rest at r(0).  Returns the recorded (u, q(y)) dataset and the
    tracking error r - y of the true position.
    """
    r = np.asarray(getattr(reference, "r", reference), dtype=float)
    n = r.size
    if ff is None:
        ff = np.zeros(n)
    ff = np.asarray(ff, dtype=float)
    if ff.shape != r.shape:
        raise DimensionError(f"feedforward length {ff.size} differs from reference length {n}")
    d = dither_sequence(cfg, n) if dither and cfg.dither_sigma > 0 else np.zeros(n)

    m, fv, fc, fk, Ts = cfg.m, cfg.fv, cfg.fc, cfg.fk, cfg.Ts
    c = cfg.controller
    res = cfg.encoder_resolution
    g = make_g(cfg.g)
    i_bound = c.i_clamp / c.ki if c.ki > 0 else math.inf
    kp, ki, kd = c.kp, c.ki, c.kd

    rl, ffl, dl = r.tolist(), ff.tolist(), d.tolist()
    u_log = [0.0] * n
    y_log = [0.0] * n
    e_log = [0.0] * n
    y1 = y2 = rl[0]
    ym = round(y1 / res) * res if res > 0 else y1
    r_prev = rl[0]
    integral = 0.0
    e_prev = 0.0
    for t in range(n):
        e = r_prev - ym
        integral = min(max(integral + e * Ts, -i_bound), i_bound)
        u = kp * e + ki * integral + kd * (e - e_prev) / Ts + ffl[t] + dl[t]
        e_prev = e
        y = _step(y1, y2, u, m, fv, fc, fk, Ts, g)
        if not abs(y) <= Y_LIMIT:
            raise DivergenceError(f"plant position {y} beyond +-{Y_LIMIT} m at sample {t} (u={u})")
        y2, y1 = y1, y
        ym = round(y / res) * res if res > 0 else y
        r_prev = rl[t]
        u_log[t] = u
        y_log[t] = ym
        e_log[t] = rl[t] - y
    data = Dataset(np.array(u_log), np.array(y_log), Ts)
    return data, TrackingResult.from_errors(np.array(e_log), reference_id, model_id)
