"""Closed-form identification of linear-in-the-parameters (LIP) models."""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .basis import BasisMap, eval_basis_matrix
from .core import Dataset, LipParams, RegressorSpec, dataset_regressors
from .errors import DatasetTooShortError, DimensionError, SingularMatrixError

RCOND_MIN = 1e-12


def basis_rows(dataset: Dataset, bmap: BasisMap, spec: RegressorSpec):
    """Basis features and aligned targets over the valid sample range."""
    bmap.check_spec(spec)
    Phi, u = dataset_regressors(dataset, spec)
    return eval_basis_matrix(bmap, Phi), u


def gram(T: np.ndarray) -> np.ndarray:
    M = T.T @ T / T.shape[0]
    return 0.5 * (M + M.T)


def equilibrated_rcond(M: np.ndarray) -> float:
    """Reciprocal 2-norm condition number of D^-1/2 M D^-1/2, D = diag(M)."""
    d = np.diag(M)
    if np.any(d <= 0):
        return 0.0
    s = 1.0 / np.sqrt(d)
    ev = np.linalg.eigvalsh(M * s[:, None] * s[None, :])
    return max(ev[0], 0.0) / ev[-1]


def solve_spd(M: np.ndarray, b: np.ndarray, what="matrix") -> np.ndarray:
    """Solve M x = b for symmetric PSD M with diagonal scaling and a conditioning guard."""
    rc = equilibrated_rcond(M)
    if rc < RCOND_MIN:
        raise SingularMatrixError(
            f"{what} is singular to working precision (rcond={rc:.3g} < {RCOND_MIN:g}); "
            "the data are not sufficiently exciting",
            rcond=rc,
        )
    s = 1.0 / np.sqrt(np.diag(M))
    Ms = M * s[:, None] * s[None, :]
    # symmetric-indefinite LDL^T with Bunch-Kaufman pivoting
    xs = scipy.linalg.solve(Ms, b * s, assume_a="sym")
    return xs * s


def gram_matrix(dataset: Dataset, bmap: BasisMap, spec: RegressorSpec) -> np.ndarray:
    T, _ = basis_rows(dataset, bmap, spec)
    if T.shape[0] < 1:
        raise DatasetTooShortError("no valid samples")
    return gram(T)


def fit_lip(dataset: Dataset, bmap: BasisMap, spec: RegressorSpec) -> LipParams:
    T, u = basis_rows(dataset, bmap, spec)
    return LipParams(fit_lip_rows(T, u))


def fit_lip_rows(T: np.ndarray, u: np.ndarray) -> np.ndarray:
    n = T.shape[0]
    return solve_spd(gram(T), T.T @ u / n, "Gram matrix M")


def correlation(xa, xb) -> float:
    """Normalised inner product (1/N) sum xa(t) xb(t); zero means uncorrelated."""
    xa = np.asarray(xa, dtype=float)
    xb = np.asarray(xb, dtype=float)
    if xa.shape != xb.shape or xa.ndim != 1:
        raise DimensionError(f"sequences must be 1-D of equal length, got {xa.shape}, {xb.shape}")
    if xa.size < 1:
        raise DatasetTooShortError("empty sequences")
    return float(xa @ xb / xa.size)


def lip_predict_rows(lip: LipParams, T: np.ndarray) -> np.ndarray:
    if lip.theta.size != T.shape[1]:
        raise DimensionError(f"theta has {lip.theta.size} entries, basis has {T.shape[1]}")
    return T @ lip.theta


def unmodelled_residual(dataset: Dataset, lip: LipParams, bmap: BasisMap, spec: RegressorSpec) -> np.ndarray:
    """u(t) - theta^T T_phy(phi(t)) over the valid sample range."""
    if lip.theta.size != bmap.n_out:
        raise DimensionError(f"theta has {lip.theta.size} entries, basis has {bmap.n_out}")
    T, u = basis_rows(dataset, bmap, spec)
    return u - lip_predict_rows(lip, T)
