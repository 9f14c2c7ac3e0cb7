"""Command line entry point: ``pgnn-ff <subcommand> [--config F] [--out D] [--seed S] [--threads N]``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import config as config_mod
from . import io
from .basis import BasisMap
from .core import Dataset, LipParams, RegressorSpec
from .errors import ConfigError, NumericalError
from .evaluation import comparison_table, lambda_sweep, run_tracking_experiment
from .feedforward import generate_ff
from .lip import fit_lip
from .plant import run_closed_loop
from .trajectory import PRESETS, ReferenceProfile, back_and_forth, preset
from .training import MODES, make_rows, train_rows

log = logging.getLogger("pgnn_ff")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
DEFAULT_OUT = "pgnn_ff_out"
BASIS_KIND = "clm"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


# shared helpers


def _spec(cfg) -> RegressorSpec:
    return RegressorSpec(0, 2, 0, cfg.Ts)


def _bmap(cfg) -> BasisMap:
    return BasisMap(BASIS_KIND, cfg.Ts)


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("PGNN_FF_OUT") or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args):
    cfg = config_mod.load(args.config) if args.config else config_mod.from_dict({})
    if args.seed is not None:
        cfg = config_mod.with_seed(cfg, args.seed)
    return cfg


def _echo_config(cfg, out: Path):
    io._write_text(out / "config_resolved.toml", cfg.dumps())


def _threads(args, cfg) -> int:
    return args.threads if args.threads is not None else cfg.threads


def _reference(cfg, name_or_path: str) -> ReferenceProfile:
    if name_or_path in PRESETS:
        return preset(name_or_path, cfg.Ts, cfg.bounds(), cfg.reference.dwell)
    if not Path(name_or_path).exists():
        raise FileNotFoundError(f"reference not found: {name_or_path}")
    return io.read_reference(name_or_path, cfg.Ts, cfg.bounds())


def _require(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    return path


def _load_lip(path) -> LipParams:
    return io.lip_from_dict(io.read_json(_require(path)), path)[0]


def _lip_for(args, cfg, data: Dataset, out: Path) -> LipParams:
    if getattr(args, "lip", None):
        return _load_lip(args.lip)
    lip = fit_lip(data, _bmap(cfg), _spec(cfg))
    io.write_json(out / "lip.json", io.lip_to_dict(lip, BASIS_KIND, _spec(cfg)))
    return lip


def _dataset(args, cfg, out: Path) -> Dataset:
    return io.read_dataset(_require(args.dataset or out / "dataset.csv"), cfg.Ts)


def _model_id(mode: str, n_l: int, seed_index: int | None = None) -> str:
    base = f"{mode}_nl{n_l}"
    return base if seed_index is None else f"{base}_s{seed_index}"


# subcommands


def cmd_generate_data(args, cfg, out: Path):
    ref = _reference(cfg, cfg.data.reference)
    plant = cfg.plant_config(quantize=cfg.data.quantize)
    data, _ = run_closed_loop(ref, None, plant, dither=True, reference_id=ref.name)
    io.write_dataset(out / "dataset.csv", data)
    meta = {"plant": asdict(plant), "seed": cfg.seed, "dither_seed": plant.seed,
            "reference_id": ref.name, "Ts": cfg.Ts, "n_samples": len(data)}
    io.write_json(out / "generate_meta.json", meta)
    return data


def cmd_fit_lip(args, cfg, out: Path):
    data = _dataset(args, cfg, out)
    lip = fit_lip(data, _bmap(cfg), _spec(cfg))
    io.write_json(out / "lip.json", io.lip_to_dict(lip, BASIS_KIND, _spec(cfg)))
    log.info("theta_LIP = %s", lip.theta)
    return lip


def _write_trained(out: Path, model_id: str, model, hist, tcfg, cfg):
    io.write_json(out / f"model_{model_id}.json",
                  io.model_to_dict(model, BASIS_KIND, _spec(cfg), tcfg.to_dict()))
    io.write_history(out / f"history_{model_id}.csv", hist)


def cmd_train(args, cfg, out: Path):
    data = _dataset(args, cfg, out)
    lip = _lip_for(args, cfg, data, out)
    seed = cfg.derived_seeds("train", 1)[0]
    tcfg = cfg.training_config(lip, args.mode, args.hidden, seed)
    rows = make_rows(data, _bmap(cfg), _spec(cfg), tcfg.subsample)
    model, hist = train_rows(rows, tcfg)
    _write_trained(out, _model_id(args.mode, args.hidden), model, hist, tcfg, cfg)
    return model


def cmd_make_reference(args, cfg, out: Path):
    if args.points:
        try:
            points = [float(p) for p in args.points.split(",")]
        except ValueError:
            raise ConfigError(f"--points: expected comma-separated numbers, got {args.points!r}") from None
        if len(points) < 2:
            raise ConfigError("--points: need at least two points")
        name = args.name or "custom"
        ref = back_and_forth(points, cfg.bounds(), cfg.Ts, cfg.reference.dwell, name)
    else:
        if args.preset not in PRESETS:
            raise ConfigError(f"--preset: unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        ref = preset(args.preset, cfg.Ts, cfg.bounds(), cfg.reference.dwell)
        name = args.name or args.preset
    io.write_reference(out / f"reference_{name}.csv", ref)
    return ref


def _read_model(path):
    model, kind, spec = io.read_any_model(_require(path))
    if kind != BASIS_KIND:
        raise ConfigError(f"{path}: unsupported basis_kind {kind!r}")
    return model, spec


def cmd_make_ff(args, cfg, out: Path):
    model, spec = _read_model(args.model)
    ref = _reference(cfg, args.reference)
    u_ff = generate_ff(model, BasisMap(BASIS_KIND, spec.Ts), spec, ref)
    io.write_ff(out / f"ff_{Path(args.model).stem}_{ref.name}.csv", u_ff, spec.Ts)
    return u_ff


def cmd_evaluate(args, cfg, out: Path):
    plant = cfg.plant_config(quantize=True)
    records = []
    for mpath in args.model:
        model, spec = _read_model(mpath)
        mid = Path(mpath).stem
        for rname in args.reference:
            ref = _reference(cfg, rname)
            res = run_tracking_experiment(model, ref, plant, BasisMap(BASIS_KIND, spec.Ts), spec, mid)
            io.write_tracking(out / f"tracking_{mid}_{ref.name}.csv", res, spec.Ts)
            records.append({"model": mid, "reference": ref.name, "mae": res.mae})
            print(f"{mid:32s} {ref.name:8s} MAE = {res.mae:.6e} m")
    io.write_records(out / "evaluation.csv", records)
    return records


def _sweep(cfg, rows, lip, out: Path, threads: int):
    e = cfg.experiment
    seeds = cfg.derived_seeds("sweep", e.sweep_n_seeds)
    base = cfg.training_config(lip, "regularized", e.nl_values[0], seeds[0])
    table = lambda_sweep(rows, base, list(e.sweep_lambdas), seeds, threads)
    records = []
    for r in table:
        records.append({"lambda": r.lam, "seed": r.seed, "data_fit": r.data_fit,
                        "lip_distance_sq": r.lip_distance_sq, "best_iteration": r.best_iteration,
                        "history": f"history_sweep_lam{io.fmt(r.lam)}_seed{r.seed}.csv"})
        io.write_history(out / records[-1]["history"], r.history)
    io.write_records(out / "lambda_sweep.csv", records)
    return table


def cmd_sweep(args, cfg, out: Path):
    data = _dataset(args, cfg, out)
    lip = _lip_for(args, cfg, data, out)
    rows = make_rows(data, _bmap(cfg), _spec(cfg), cfg.training.subsample)
    return _sweep(cfg, rows, lip, out, _threads(args, cfg))


def cmd_reproduce(args, cfg, out: Path):
    threads = _threads(args, cfg)
    e = cfg.experiment
    data = cmd_generate_data(args, cfg, out)
    lip = fit_lip(data, _bmap(cfg), _spec(cfg))
    io.write_json(out / "lip.json", io.lip_to_dict(lip, BASIS_KIND, _spec(cfg)))
    rows = make_rows(data, _bmap(cfg), _spec(cfg), cfg.training.subsample)
    refs = {}
    for name in e.references:
        refs[name] = _reference(cfg, name)
        io.write_reference(out / f"reference_{name}.csv", refs[name])

    seeds = cfg.derived_seeds("train", e.n_seeds)
    base = cfg.training_config(lip, "regularized", e.nl_values[0], seeds[0])
    plant = cfg.plant_config(quantize=True)
    table = comparison_table(rows, base, list(e.modes), refs, list(e.nl_values), seeds, plant,
                             _bmap(cfg), _spec(cfg), cfg.training.lambda_, threads)
    for (mode, nl, s), model in table.models.items():
        k = seeds.index(s)
        tcfg = cfg.training_config(lip, mode, nl, s)
        _write_trained(out, _model_id(mode, nl, k), model, table.histories[(mode, nl, s)], tcfg, cfg)
    # full error traces for the first seed and the model-free baselines
    spec = _spec(cfg)
    traced = [(_model_id(m, nl), table.models[(m, nl, seeds[0])]) for m in e.modes for nl in e.nl_values]
    traced += [("lip", lip), ("feedback_only", None)]
    for mid, model in traced:
        for name, ref in refs.items():
            res = run_tracking_experiment(model, ref, plant, _bmap(cfg), spec, mid)
            io.write_tracking(out / f"tracking_{mid}_{name}.csv", res, spec.Ts, e.trace_stride)
    io.write_records(out / "table1_analog.csv", table.records())
    io._write_text(out / "table1_analog.txt", table.render() + "\n")
    print(table.render())
    _sweep(cfg, rows, lip, out, threads)
    return table


COMMANDS = {
    "generate-data": cmd_generate_data,
    "fit-lip": cmd_fit_lip,
    "train": cmd_train,
    "make-reference": cmd_make_reference,
    "make-ff": cmd_make_ff,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML experiment file (defaults apply to missing keys)")
    common.add_argument("--out", help="output directory (default: $PGNN_FF_OUT or ./pgnn_ff_out)")
    common.add_argument("--seed", type=int, help="root seed, overrides the config")
    common.add_argument("--threads", type=int, help="worker processes for independent runs")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="pgnn-ff", description="Physics-guided neural network feedforward experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("generate-data", parents=[common], help="closed-loop identification data with dither")
    p = sub.add_parser("fit-lip", parents=[common], help="least-squares physical model")
    p.add_argument("--dataset", help="dataset CSV (default: <out>/dataset.csv)")
    p = sub.add_parser("train", parents=[common], help="train one PGNN")
    p.add_argument("--dataset")
    p.add_argument("--lip", help="LIP JSON used as anchor (default: fit from the dataset)")
    p.add_argument("--mode", choices=MODES, default="regularized")
    p.add_argument("--hidden", type=int, default=16, help="hidden neurons")
    p = sub.add_parser("make-reference", parents=[common], help="write a reference CSV")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", help=f"one of {sorted(PRESETS)}")
    g.add_argument("--points", help="comma-separated rest positions in m")
    p.add_argument("--name")
    p = sub.add_parser("make-ff", parents=[common], help="feedforward signal for a reference")
    p.add_argument("--model", required=True, help="model or LIP JSON")
    p.add_argument("--reference", required=True, help="preset name or reference CSV")
    p = sub.add_parser("evaluate", parents=[common], help="closed-loop tracking MAE")
    p.add_argument("--model", nargs="+", required=True)
    p.add_argument("--reference", nargs="+", default=["r1", "r2"])
    p = sub.add_parser("sweep", parents=[common], help="regularization sweep")
    p.add_argument("--dataset")
    p.add_argument("--lip")
    sub.add_parser("reproduce", parents=[common], help="full pipeline: data, LIP, all modes, tables")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        cfg = _load_config(args)
        if args.threads is not None and args.threads < 1:
            raise ConfigError(f"--threads: must be >= 1, got {args.threads}")
        out = _out_dir(args)
        _echo_config(cfg, out)
        COMMANDS[args.command](args, cfg, out)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
