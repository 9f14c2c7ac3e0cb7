"""PGNN prediction, training costs, output-layer initialisation and the training loop."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .basis import BasisMap, eval_basis, eval_basis_matrix, nn_inputs
from .core import (
    Dataset,
    LipParams,
    PGNNParams,
    RegressorSpec,
    Regressor,
    dataset_regressors,
    flatten_pgnn,
    unflatten_pgnn,
)
from .errors import DimensionError, DivergenceError
from .lip import solve_spd
from .nn import backward_batch, forward_batch, grads_to_params, hidden_output_batch, init_hidden_random

MODES = ("regularized", "unregularized", "sequential", "pinn_baseline")


@dataclass(frozen=True)
class TrainingConfig:
    theta_lip_ref: LipParams
    lambda_diag: object = 0.01  # scalar (lambda * I) or one weight per physical parameter
    mode: str = "regularized"
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iter: int = 5000
    tol: float = 0.0  # stop once max |gradient| <= tol; 0 runs all iterations
    seed: int = 0
    hidden: tuple = (16,)
    init_scale: float = 1.0
    input_scaling: object = None  # None: unit max-abs of each input on the training rows
    pinn_lambda: float = 0.01
    pinn_train_phy: bool = False
    subsample: int = 1  # keep every k-th training row

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        lam = np.atleast_1d(np.asarray(self.lambda_diag, dtype=float))
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError(f"lambda_diag entries must be finite and >= 0, got {self.lambda_diag}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be an integer >= 1, got {self.max_iter}")
        if not self.pinn_lambda >= 0:
            raise ValueError(f"pinn_lambda must be >= 0, got {self.pinn_lambda}")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if int(self.subsample) != self.subsample or self.subsample < 1:
            raise ValueError(f"subsample must be an integer >= 1, got {self.subsample}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def lambda_vector(self, n: int) -> np.ndarray:
        if self.mode == "unregularized":
            return np.zeros(n)
        lam = np.atleast_1d(np.asarray(self.lambda_diag, dtype=float))
        if lam.size == 1:
            return np.full(n, lam[0])
        if lam.size != n:
            raise DimensionError(f"lambda_diag has {lam.size} entries, theta_phy has {n}")
        return lam

    def to_dict(self) -> dict:
        lam = np.atleast_1d(np.asarray(self.lambda_diag, dtype=float))
        return {
            "mode": self.mode,
            "lambda_diag": lam.tolist(),
            "theta_lip_ref": self.theta_lip_ref.theta.tolist(),
            "step_size": self.step_size,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "seed": self.seed,
            "hidden": list(self.hidden),
            "init_scale": self.init_scale,
            "input_scaling": None if self.input_scaling is None else np.asarray(self.input_scaling, float).tolist(),
            "pinn_lambda": self.pinn_lambda,
            "pinn_train_phy": self.pinn_train_phy,
            "subsample": self.subsample,
        }


@dataclass(frozen=True)
class Rows:
    """Training rows: basis features T, unscaled network inputs X and targets u."""

    T: np.ndarray
    X: np.ndarray
    u: np.ndarray

    @property
    def n(self) -> int:
        return self.u.size


def make_rows(dataset: Dataset, bmap: BasisMap, spec: RegressorSpec, subsample: int = 1) -> Rows:
    bmap.check_spec(spec)
    Phi, u = dataset_regressors(dataset, spec)
    if subsample > 1:
        Phi, u = Phi[::subsample], u[::subsample]
    T = eval_basis_matrix(bmap, Phi)
    return Rows(T, nn_inputs(bmap, Phi, T), np.array(u))


def max_abs_scaling(X: np.ndarray) -> np.ndarray:
    """Per-column factor giving each input unit max |value| (1 for all-zero columns)."""
    peak = np.max(np.abs(X), axis=0)
    return np.where(peak > 0, 1.0 / np.where(peak > 0, peak, 1.0), 1.0)


def resolve_input_scaling(cfg: TrainingConfig, rows: Rows) -> np.ndarray:
    if cfg.input_scaling is not None:
        return np.asarray(cfg.input_scaling, dtype=float)
    return max_abs_scaling(rows.X)


class CostTerms(NamedTuple):
    total: float
    data_fit: float
    reg: float


def pgnn_predict(model: PGNNParams, bmap: BasisMap, phi) -> float:
    if isinstance(phi, Regressor):
        phi = phi.phi
    phi = np.asarray(phi, dtype=float)
    T = eval_basis(bmap, phi)
    x = nn_inputs(bmap, phi[None, :], T[None, :])
    return float(predict_rows(model, Rows(T[None, :], x, np.zeros(1)))[0])


def _nn_out(model: PGNNParams, X: np.ndarray):
    return forward_batch(model.nn, X * model.input_scaling)


def predict_rows(model, rows: Rows) -> np.ndarray:
    """Predicted input for every row; accepts LipParams, PGNNParams or a callable."""
    if isinstance(model, LipParams):
        if model.theta.size != rows.T.shape[1]:
            raise DimensionError(f"theta has {model.theta.size} entries, basis has {rows.T.shape[1]}")
        return rows.T @ model.theta
    if isinstance(model, PGNNParams):
        if model.theta_phy.size != rows.T.shape[1]:
            raise DimensionError(
                f"theta_phy has {model.theta_phy.size} entries, basis has {rows.T.shape[1]}"
            )
        f, _ = _nn_out(model, rows.X)
        return f if model.nn_only else f + rows.T @ model.theta_phy
    return np.asarray(model(rows), dtype=float)


def mse_cost(model, rows: Rows) -> float:
    r = rows.u - predict_rows(model, rows)
    return float(r @ r / rows.n)


def regularized_cost(model: PGNNParams, rows: Rows, cfg: TrainingConfig) -> CostTerms:
    lam = cfg.lambda_vector(model.theta_phy.size)
    data = mse_cost(model, rows)
    d = model.theta_phy - cfg.theta_lip_ref.theta
    reg = float(d @ (lam * d))
    return CostTerms(data + reg, data, reg)


def pinn_cost(model: PGNNParams, rows: Rows, cfg: TrainingConfig) -> CostTerms:
    """Black-box network fit plus lambda * mean (f_NN - theta_phy^T T)^2."""
    f, _ = _nn_out(model, rows.X)
    r = rows.u - f
    p = f - rows.T @ model.theta_phy
    data = float(r @ r / rows.n)
    pen = float(cfg.pinn_lambda * (p @ p) / rows.n)
    return CostTerms(data + pen, data, pen)


def _value_and_grad(model: PGNNParams, rows: Rows, cfg: TrainingConfig, pinn: bool, Xs=None):
    n = rows.n
    if Xs is None:
        f, acts = _nn_out(model, rows.X)
    else:
        f, acts = forward_batch(model.nn, Xs)
    phys = rows.T @ model.theta_phy
    if pinn:
        r = f - rows.u
        p = f - phys
        data = float(r @ r / n)
        reg = float(cfg.pinn_lambda * (p @ p) / n)
        g_out = 2.0 * (r + cfg.pinn_lambda * p) / n
        g_phy = -2.0 * cfg.pinn_lambda * (rows.T.T @ p) / n
    else:
        r = f + phys - rows.u
        lam = cfg.lambda_vector(model.theta_phy.size)
        d = model.theta_phy - cfg.theta_lip_ref.theta
        data = float(r @ r / n)
        reg = float(d @ (lam * d))
        g_out = 2.0 * r / n
        g_phy = rows.T.T @ g_out + 2.0 * lam * d
    nn_grads = backward_batch(model.nn, acts, g_out)
    # chain rule through the input scaling is not needed: scaling is fixed, not trained
    return CostTerms(data + reg, data, reg), nn_grads, g_phy


def cost_gradient(model: PGNNParams, rows: Rows, cfg: TrainingConfig) -> PGNNParams:
    """Exact gradient of the regularized cost, in a PGNNParams-shaped container."""
    _, nn_grads, g_phy = _value_and_grad(model, rows, cfg, pinn=False)
    return PGNNParams(grads_to_params(model.nn, nn_grads), g_phy, model.input_scaling, model.nn_only)


def pinn_cost_gradient(model: PGNNParams, rows: Rows, cfg: TrainingConfig) -> PGNNParams:
    _, nn_grads, g_phy = _value_and_grad(model, rows, cfg, pinn=True)
    return PGNNParams(grads_to_params(model.nn, nn_grads), g_phy, model.input_scaling, model.nn_only)


# ---------------------------------------------------------------------------
# output-layer initialisation


@dataclass(frozen=True)
class OutputLayerSystem:
    """Normal equations of the cost restricted to [W_out, B_out, theta_phy]."""

    M_R: np.ndarray
    rhs: np.ndarray
    n_hidden: int

    def restricted_cost_gradient(self, theta_ol: np.ndarray) -> np.ndarray:
        return 2.0 * (self.M_R @ theta_ol - self.rhs)

    def anchor(self, theta_lip: np.ndarray) -> np.ndarray:
        return np.concatenate([np.zeros(self.n_hidden + 1), theta_lip])


def _scaled(hidden, rows: Rows, cfg: TrainingConfig):
    scaling = resolve_input_scaling(cfg, rows)
    if scaling.size != rows.X.shape[1]:
        raise DimensionError(f"input_scaling has {scaling.size} entries, inputs have {rows.X.shape[1]}")
    return hidden_output_batch(hidden, rows.X * scaling), scaling


def output_layer_system(hidden, rows: Rows, cfg: TrainingConfig) -> OutputLayerSystem:
    H, _ = _scaled(hidden, rows, cfg)
    n, n_l = H.shape
    p = rows.T.shape[1]
    Phi_ol = np.column_stack([H, np.ones(n), rows.T])
    lam = cfg.lambda_vector(p)
    M_R = Phi_ol.T @ Phi_ol / n
    M_R = 0.5 * (M_R + M_R.T)
    M_R[n_l + 1 :, n_l + 1 :] += np.diag(lam)
    rhs = Phi_ol.T @ rows.u / n
    rhs[n_l + 1 :] += lam * cfg.theta_lip_ref.theta
    return OutputLayerSystem(M_R, rhs, n_l)


def init_output_layer(hidden, rows: Rows, cfg: TrainingConfig) -> PGNNParams:
    """Global minimiser of the regularized cost over output layer and theta_phy,
    hidden layers held fixed."""
    sys_ = output_layer_system(hidden, rows, cfg)
    theta_ol = solve_spd(sys_.M_R, sys_.rhs, "output-layer matrix M_R")
    n_l = sys_.n_hidden
    _, scaling = _scaled(hidden, rows, cfg)
    nn = hidden.with_output(theta_ol[:n_l], theta_ol[n_l])
    return PGNNParams(nn, theta_ol[n_l + 1 :], scaling)


def strict_improvement_condition(hidden, rows: Rows, cfg: TrainingConfig) -> tuple[bool, float]:
    """Whether the initialised cost is strictly below the LIP cost, with the residual norm.

    The residual is M_R [0; 0; theta_LIP] - rhs, i.e. half the restricted-cost
    gradient at the LIP point.
    """
    sys_ = output_layer_system(hidden, rows, cfg)
    x = sys_.anchor(cfg.theta_lip_ref.theta)
    res = sys_.M_R @ x - sys_.rhs
    norm = float(np.linalg.norm(res))
    scale = np.linalg.norm(sys_.M_R, 2) * np.linalg.norm(x) + np.linalg.norm(sys_.rhs)
    return norm > 1e-10 * scale, norm


def _ls_output_layer(hidden, rows: Rows, cfg: TrainingConfig, target: np.ndarray, theta_phy, nn_only):
    H, scaling = _scaled(hidden, rows, cfg)
    A = np.column_stack([H, np.ones(rows.n)])
    M = A.T @ A / rows.n
    w = solve_spd(0.5 * (M + M.T), A.T @ target / rows.n, "hidden-feature Gram matrix")
    nn = hidden.with_output(w[:-1], w[-1])
    return PGNNParams(nn, theta_phy, scaling, nn_only)


def initial_model(rows: Rows, cfg: TrainingConfig) -> PGNNParams:
    n_in = rows.X.shape[1]
    hidden = init_hidden_random([n_in, *cfg.hidden], cfg.seed, cfg.init_scale)
    theta_lip = cfg.theta_lip_ref.theta
    if cfg.mode in ("regularized", "unregularized"):
        return init_output_layer(hidden, rows, cfg)
    if cfg.mode == "sequential":
        return _ls_output_layer(hidden, rows, cfg, rows.u - rows.T @ theta_lip, theta_lip, False)
    lam = cfg.pinn_lambda
    target = (rows.u + lam * (rows.T @ theta_lip)) / (1.0 + lam)
    return _ls_output_layer(hidden, rows, cfg, target, theta_lip, True)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainingHistory:
    iteration: np.ndarray
    total_cost: np.ndarray
    data_fit: np.ndarray
    reg_term: np.ndarray
    theta_phy: np.ndarray  # one row per iteration
    best_iteration: int = 0

    def __len__(self):
        return self.iteration.size


@dataclass
class _Recorder:
    totals: list = field(default_factory=list)
    fits: list = field(default_factory=list)
    regs: list = field(default_factory=list)
    phys: list = field(default_factory=list)

    def history(self, best: int) -> TrainingHistory:
        k = len(self.totals)
        return TrainingHistory(
            np.arange(k),
            np.array(self.totals),
            np.array(self.fits),
            np.array(self.regs),
            np.array(self.phys).reshape(k, -1),
            best,
        )


def train_rows(rows: Rows, cfg: TrainingConfig, model0: PGNNParams | None = None):
    """Full-batch Adam on the mode's cost; returns the lowest-cost iterate."""
    model = initial_model(rows, cfg) if model0 is None else model0
    pinn = cfg.mode == "pinn_baseline"
    x = flatten_pgnn(model)
    trainable = np.ones_like(x)
    n_phy = model.theta_phy.size
    if cfg.mode == "sequential" or (pinn and not cfg.pinn_train_phy):
        trainable[-n_phy:] = 0.0

    Xs = rows.X * model.input_scaling
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    rec = _Recorder()
    best_cost, best_x, best_k = np.inf, x.copy(), 0
    for k in range(cfg.max_iter):
        current = unflatten_pgnn(x, model)
        # overflow is reported below as a DivergenceError
        with np.errstate(over="ignore", invalid="ignore"):
            terms, nn_grads, g_phy = _value_and_grad(current, rows, cfg, pinn, Xs)
        if not np.isfinite(terms.total):
            raise DivergenceError(
                f"non-finite cost at iteration {k} (data fit {terms.data_fit}, reg {terms.reg}); "
                f"theta_phy={current.theta_phy.tolist()}"
            )
        rec.totals.append(terms.total)
        rec.fits.append(terms.data_fit)
        rec.regs.append(terms.reg)
        rec.phys.append(current.theta_phy.copy())
        if terms.total < best_cost:
            best_cost, best_x, best_k = terms.total, x.copy(), k
        if k == cfg.max_iter - 1:
            break
        g = np.concatenate([np.concatenate([dW.ravel(), dB]) for dW, dB in nn_grads] + [g_phy])
        g *= trainable
        if cfg.tol > 0 and np.max(np.abs(g)) <= cfg.tol:
            break
        t = k + 1
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        m_hat = m / (1 - cfg.beta1**t)
        v_hat = v / (1 - cfg.beta2**t)
        x = x - cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return unflatten_pgnn(best_x, model), rec.history(best_k)


def train(dataset: Dataset, bmap: BasisMap, spec: RegressorSpec, cfg: TrainingConfig):
    rows = make_rows(dataset, bmap, spec, cfg.subsample)
    return train_rows(rows, cfg)


def mode_cost(model: PGNNParams, rows: Rows, cfg: TrainingConfig) -> CostTerms:
    return pinn_cost(model, rows, cfg) if cfg.mode == "pinn_baseline" else regularized_cost(model, rows, cfg)


def with_mode(cfg: TrainingConfig, **changes) -> TrainingConfig:
    return replace(cfg, **changes)
