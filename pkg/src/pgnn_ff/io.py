"""CSV and JSON artifacts with fixed float formatting for byte-stable output."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Dataset, LipParams, NNLayer, NNParams, PGNNParams, RegressorSpec, TrackingResult
from .errors import PGNNError
from .trajectory import DEFAULT_BOUNDS, Bounds, ReferenceProfile


class ArtifactFormatError(PGNNError, OSError):
    """An input file exists but its contents cannot be parsed (exit code 3)."""


def fmt(x) -> str:
    return "%.17g" % x


def _write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    return path


def write_columns(path, header: Sequence[str], columns: Sequence) -> Path:
    cols = [np.asarray(c) for c in columns]
    lines = [",".join(header)]
    for row in zip(*(c.tolist() for c in cols)):
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    return _write_text(path, "\n".join(lines) + "\n")


def read_columns(path, header: Sequence[str]) -> dict:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise ArtifactFormatError(f"{path}: empty file") from None
        if [h.strip() for h in got] != list(header):
            raise ArtifactFormatError(f"{path}: expected header {','.join(header)}, got {','.join(got)}")
        try:
            rows = [[float(v) for v in r] for r in reader if r]
        except ValueError as exc:
            raise ArtifactFormatError(f"{path}: {exc}") from None
    if any(len(r) != len(header) for r in rows):
        raise ArtifactFormatError(f"{path}: ragged rows")
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return {h: data[:, i] for i, h in enumerate(header)}


def _time(n: int, Ts: float) -> np.ndarray:
    return np.arange(n) * Ts


def _infer_Ts(path, t: np.ndarray) -> float:
    if t.size < 2:
        raise ArtifactFormatError(f"{path}: need at least two samples to infer the sampling time")
    return float(t[1] - t[0])


# datasets, references, feedforward


def write_dataset(path, data: Dataset) -> Path:
    return write_columns(path, ["t", "u", "y"], [_time(len(data), data.Ts), data.u, data.y])


def read_dataset(path, Ts: float | None = None) -> Dataset:
    c = read_columns(path, ["t", "u", "y"])
    try:
        return Dataset(c["u"], c["y"], Ts if Ts is not None else _infer_Ts(path, c["t"]))
    except ValueError as exc:
        raise ArtifactFormatError(f"{path}: {exc}") from None


def write_reference(path, ref: ReferenceProfile) -> Path:
    return write_columns(path, ["t", "r"], [_time(len(ref), ref.Ts), ref.r])


def read_reference(path, Ts: float | None = None, bounds: Bounds = DEFAULT_BOUNDS) -> ReferenceProfile:
    c = read_columns(path, ["t", "r"])
    if not np.all(np.isfinite(c["r"])):
        raise ArtifactFormatError(f"{path}: non-finite reference samples")
    return ReferenceProfile(c["r"], Ts if Ts is not None else _infer_Ts(path, c["t"]), bounds, Path(path).stem)


def write_ff(path, u_ff, Ts: float) -> Path:
    u_ff = np.asarray(u_ff, dtype=float)
    return write_columns(path, ["t", "u_ff"], [_time(u_ff.size, Ts), u_ff])


def read_ff(path) -> np.ndarray:
    return read_columns(path, ["t", "u_ff"])["u_ff"]


def write_tracking(path, result: TrackingResult, Ts: float, stride: int = 1) -> Path:
    """Error trace ``t,e``; ``stride`` > 1 keeps every stride-th sample."""
    return write_columns(path, ["t", "e"], [_time(result.e.size, Ts)[::stride], result.e[::stride]])


def write_history(path, history) -> Path:
    n_phy = history.theta_phy.shape[1]
    header = ["iter", "total_cost", "data_fit", "reg_term"] + [f"theta_phy_{i}" for i in range(n_phy)]
    cols = [history.iteration, history.total_cost, history.data_fit, history.reg_term]
    cols += [history.theta_phy[:, i] for i in range(n_phy)]
    return write_columns(path, header, cols)


def write_records(path, records: Iterable[dict]) -> Path:
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    header = list(records[0])
    cols = [[r[h] if isinstance(r[h], str) else float(r[h]) for r in records] for h in header]
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(v if isinstance(v, str) else _num(v) for v in row))
    return _write_text(path, "\n".join(lines) + "\n")


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 2**53 else fmt(v)


# JSON


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    return _write_text(path, dumps(obj))


def read_json(path) -> dict:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ArtifactFormatError(f"{path}: invalid JSON ({exc})") from None


def _floats(x) -> list:
    return np.asarray(x, dtype=float).tolist()


def lip_to_dict(lip: LipParams, basis_kind: str, spec: RegressorSpec) -> dict:
    return {"theta": _floats(lip.theta), "basis_kind": basis_kind, "spec": spec.to_dict()}


def lip_from_dict(d: dict, path="<lip>") -> tuple[LipParams, str, RegressorSpec]:
    try:
        return LipParams(d["theta"]), d["basis_kind"], RegressorSpec(**d["spec"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactFormatError(f"{path}: malformed LIP parameter file ({exc})") from None


def model_to_dict(model: PGNNParams, basis_kind: str, spec: RegressorSpec, cfg: dict | None = None) -> dict:
    return {
        "theta_phy": _floats(model.theta_phy),
        "nn": {
            "activation": model.nn.activation,
            "widths": model.nn.widths,
            "layers": [{"W": _floats(layer.W), "B": _floats(layer.B)} for layer in model.nn.layers],
        },
        "input_scaling": _floats(model.input_scaling),
        "nn_only": model.nn_only,
        "basis_kind": basis_kind,
        "spec": spec.to_dict(),
        "cfg": cfg or {},
    }


def model_from_dict(d: dict, path="<model>") -> tuple[PGNNParams, str, RegressorSpec]:
    try:
        layers = tuple(NNLayer(np.array(l["W"], dtype=float).reshape(len(l["B"]), -1), l["B"])
                       for l in d["nn"]["layers"])
        nn = NNParams(layers, d["nn"]["activation"])
        model = PGNNParams(nn, d["theta_phy"], d["input_scaling"], bool(d.get("nn_only", False)))
        return model, d["basis_kind"], RegressorSpec(**d["spec"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactFormatError(f"{path}: malformed model file ({exc})") from None


def read_any_model(path):
    """PGNN model or LIP parameter file, told apart by their fields."""
    d = read_json(path)
    if "theta_phy" in d:
        return model_from_dict(d, path)
    return lip_from_dict(d, path)
