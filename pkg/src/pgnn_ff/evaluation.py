"""Tracking experiments, MAE, regularisation sweeps and mode comparison tables."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .basis import BasisMap
from .core import CLM_SPEC, RegressorSpec, TrackingResult
from .feedforward import generate_ff
from .plant import PlantConfig, run_closed_loop
from .training import Rows, TrainingConfig, TrainingHistory, train_rows

__all__ = [
    "TrackingResult",
    "mae",
    "run_tracking_experiment",
    "lambda_sweep",
    "comparison_table",
    "SweepRow",
    "ComparisonTable",
]


def mae(e) -> float:
    e = np.asarray(e, dtype=float)
    if e.size == 0:
        raise ValueError("MAE of an empty error sequence")
    return float(np.mean(np.abs(e)))


def run_tracking_experiment(model, reference, plant_cfg: PlantConfig, bmap: BasisMap | None = None,
                            spec: RegressorSpec = CLM_SPEC, model_id: str = "") -> TrackingResult:
    """Feedforward from ``model`` (None: feedback only) on the plant without dither."""
    bmap = bmap or BasisMap("clm", spec.Ts)
    ff = None if model is None else generate_ff(model, bmap, spec, reference)
    _, result = run_closed_loop(reference, ff, plant_cfg, dither=False,
                                reference_id=getattr(reference, "name", ""), model_id=model_id)
    return result


def _map(fn, jobs, threads: int):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


@dataclass(frozen=True)
class SweepRow:
    lam: float
    seed: int
    data_fit: float
    lip_distance_sq: float
    best_iteration: int
    theta_phy: np.ndarray
    history: TrainingHistory = field(repr=False)


def _sweep_job(job):
    rows, cfg = job
    model, hist = train_rows(rows, cfg)
    d = model.theta_phy - cfg.theta_lip_ref.theta
    k = hist.best_iteration
    return SweepRow(float(np.atleast_1d(cfg.lambda_diag)[0]), cfg.seed, float(hist.data_fit[k]),
                    float(d @ d), k, model.theta_phy, hist)


def lambda_sweep(rows: Rows, base: TrainingConfig, lambdas: Sequence[float], seeds: Sequence[int],
                 threads: int = 1) -> list[SweepRow]:
    """Train the regularized PGNN for every (lambda, seed); rows ordered lambda-major."""
    if not lambdas or not seeds:
        raise ValueError("lambda_sweep needs at least one lambda and one seed")
    jobs = [(rows, replace(base, mode="regularized", lambda_diag=float(lam), seed=int(s)))
            for lam in lambdas for s in seeds]
    return _map(_sweep_job, jobs, threads)


@dataclass
class ComparisonTable:
    """Tracking MAE per (mode, reference, n_l) over seeds, plus model-free baselines."""

    cells: dict  # (mode, reference, n_l) -> [mae per seed]
    baselines: dict  # (name, reference) -> mae; names "lip" and "feedback_only"
    seeds: list
    models: dict = field(default_factory=dict)  # (mode, n_l, seed) -> trained model
    histories: dict = field(default_factory=dict)  # (mode, n_l, seed) -> TrainingHistory

    def mean(self, mode, reference, n_l) -> float:
        return float(np.mean(self.cells[(mode, reference, n_l)]))

    def records(self):
        out = []
        for (mode, ref, nl), values in self.cells.items():
            for seed, v in zip(self.seeds, values):
                out.append({"model": mode, "reference": ref, "n_l": nl, "seed": seed, "mae": v})
        for (name, ref), v in self.baselines.items():
            out.append({"model": name, "reference": ref, "n_l": 0, "seed": -1, "mae": v})
        return out

    def render(self) -> str:
        refs = sorted({k[1] for k in self.cells} | {k[1] for k in self.baselines})
        head = ["model", "n_l"] + [f"MAE {r} [m]" for r in refs]
        lines = []
        for mode, nl in dict.fromkeys((k[0], k[2]) for k in self.cells):
            lines.append([mode, str(nl)] + [f"{self.mean(mode, r, nl):.4e}" for r in refs])
        for name in dict.fromkeys(k[0] for k in self.baselines):
            lines.append([name, "-"] + [f"{self.baselines[(name, r)]:.4e}" for r in refs])
        widths = [max(len(row[i]) for row in [head] + lines) for i in range(len(head))]
        fmt = lambda row: "  ".join(c.ljust(w) for c, w in zip(row, widths))
        return "\n".join([fmt(head), "  ".join("-" * w for w in widths)] + [fmt(r) for r in lines])


def _train_job(job):
    rows, cfg = job
    return train_rows(rows, cfg)


def _track_job(job):
    model, reference, plant_cfg, bmap, spec = job
    return run_tracking_experiment(model, reference, plant_cfg, bmap, spec).mae


def mode_config(base: TrainingConfig, mode: str, n_l: int, seed: int, lam_regularized: float = 0.01):
    lam = 0.0 if mode == "unregularized" else lam_regularized
    return replace(base, mode=mode, hidden=(int(n_l),), seed=int(seed), lambda_diag=lam)


def comparison_table(rows: Rows, base: TrainingConfig, modes: Sequence[str], references: dict,
                     nl_values: Sequence[int], seeds: Sequence[int], plant_cfg: PlantConfig,
                     bmap: BasisMap | None = None, spec: RegressorSpec = CLM_SPEC,
                     lam_regularized: float = 0.01, threads: int = 1) -> ComparisonTable:
    """Train every (mode, n_l, seed), then track every reference with each model."""
    bmap = bmap or BasisMap("clm", spec.Ts)
    keys = [(mode, nl, s) for mode in modes for nl in nl_values for s in seeds]
    trained = _map(_train_job, [(rows, mode_config(base, m, nl, s, lam_regularized)) for m, nl, s in keys], threads)
    models = [m for m, _ in trained]
    refs = list(references.items())
    track_jobs = [(model, ref, plant_cfg, bmap, spec) for model in models for _, ref in refs]
    track_jobs += [(base.theta_lip_ref, ref, plant_cfg, bmap, spec) for _, ref in refs]
    track_jobs += [(None, ref, plant_cfg, bmap, spec) for _, ref in refs]
    maes = _map(_track_job, track_jobs, threads)

    cells, models_by_key, histories = {}, {}, {}
    it = iter(maes)
    for (mode, nl, s), (model, hist) in zip(keys, trained):
        models_by_key[(mode, nl, s)] = model
        histories[(mode, nl, s)] = hist
        for name, _ in refs:
            cells.setdefault((mode, name, nl), []).append(next(it))
    baselines = {("lip", name): next(it) for name, _ in refs}
    baselines.update({("feedback_only", name): next(it) for name, _ in refs})
    return ComparisonTable(cells, baselines, list(seeds), models_by_key, histories)
