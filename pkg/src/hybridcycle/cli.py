"""Command-line pipeline: design, data generation, training, solving, reports.

Every stage is a pure function of its inputs and seeds; reruns with the same
arguments produce byte-identical outputs. Exit codes: 0 success, 1 usage,
2 convergence or training failure, 3 I/O or schema failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DivergenceError,
    DomainError,
    EnvelopeError,
    SchemaError,
    SizingError,
)
from .textio import read_keyvalue, write_text

_USAGE_EXIT = 1
_SOLVER_EXIT = 2
_IO_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit_Usage(message)


class SystemExit_Usage(Exception):
    pass


def _write_manifest(out_dir: str, command: str, args: dict) -> None:
    skip = {"out", "model_out", "report", "command"}  # output locations, not semantics
    payload = {
        "command": command,
        "args": {k: str(v) for k, v in args.items() if v is not None and k not in skip},
        "package_version": __version__,
        "manifest_version": 1,
    }
    write_text(os.path.join(out_dir, "manifest.json"), json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _load_design_spec(path: str | None):
    from .cycle import DesignSpec

    if path is None:
        return DesignSpec()
    kv = read_keyvalue(path, "design-spec v1")
    kwargs = {}
    for key, value in kv.items():
        if not hasattr(DesignSpec, key):
            raise SchemaError(f"{path}: unknown design key {key!r}")
        kwargs[key] = float(value)
    return DesignSpec(**kwargs)


def _load_degradation(path: str) -> dict:
    from .maps import Degradation

    kv = read_keyvalue(path, "component-degradation v1")
    deltas: dict = {}
    for key, value in kv.items():
        comp, _, field = key.partition(".")
        if field not in ("flow", "eff"):
            raise SchemaError(f"{path}: unknown degradation field {key!r}")
        deltas.setdefault(comp, {})[field] = float(value)
    return {comp: Degradation(**fields) for comp, fields in deltas.items()}


def _load_noise(path: str | None) -> dict | None:
    if path is None:
        return None
    kv = read_keyvalue(path, "noise v1")
    return {key: float(value) for key, value in kv.items()}


def _train_config(args) -> "TrainConfig":
    from .nn import TrainConfig

    return TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        decay_factor=args.decay,
        decay_every_epochs=args.decay_every,
        batch_size=args.batch,
        seed=args.seed,
    )


def _add_train_flags(p, epochs=500):
    p.add_argument("--epochs", type=int, default=epochs, help="training epochs")
    p.add_argument("--lr", type=float, default=1e-3, help="initial learning rate")
    p.add_argument("--decay", type=float, default=0.1, help="learning-rate decay fraction")
    p.add_argument("--decay-every", type=int, default=100, help="epochs between decays")
    p.add_argument("--batch", type=int, default=256, help="mini-batch size")
    p.add_argument("--seed", type=int, default=0, help="shuffle seed")


def build_parser() -> _Parser:
    parser = _Parser(prog="hybridcycle", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="size the reference engine")
    p.add_argument("--spec", help="design-spec v1 key-value file (defaults when omitted)")
    p.add_argument("--out", required=True, help="output config directory")

    p = sub.add_parser("gen-mc", help="Monte Carlo dataset from the reference cycle")
    p.add_argument("--cfg", required=True, help="engine config directory")
    p.add_argument("--n", type=int, default=15360, help="sample count")
    p.add_argument("--split", type=float, default=0.8, help="train fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel solver workers")

    p = sub.add_parser("gen-fd", help="synthetic degraded-engine flight dataset")
    p.add_argument("--cfg", required=True, help="clean engine config directory")
    p.add_argument("--degradation", required=True, help="component-degradation v1 file")
    p.add_argument("--mission", required=True, help="mission-profile v1 file")
    p.add_argument("--noise", help="noise v1 file (default: 0.3%% T6, 0.2%% speeds)")
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("pretrain", help="phase one: train on Monte Carlo data")
    p.add_argument("--cfg", required=True)
    p.add_argument("--data", required=True, help="gen-mc output directory")
    p.add_argument("--model-out", required=True)
    p.add_argument("--model-seed", type=int, default=0, help="weight init seed")
    p.add_argument("--include-ma2", action="store_true", help="feed Ma2 to the inlet net")
    _add_train_flags(p)

    p = sub.add_parser("train-fd", help="phase two: correct the model on flight data")
    p.add_argument("--cfg", required=True)
    p.add_argument("--model", required=True, help="pretrained model directory")
    p.add_argument("--data", required=True, help="gen-fd output directory")
    p.add_argument("--select", default="T6", help="comma-separated recorded outputs")
    p.add_argument("--model-out", required=True)
    _add_train_flags(p)

    p = sub.add_parser("solve-w", help="recover W2/W25 per sample with frozen weights")
    p.add_argument("--cfg", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="dataset directory (uses test.ds)")
    p.add_argument("--out", required=True, help="results file")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--init-scale", type=float, help="seed at this multiple of stored flows")

    p = sub.add_parser("eval", help="comparison report over a flight test set")
    p.add_argument("--cfg", required=True)
    p.add_argument("--data", required=True, help="gen-fd output directory")
    p.add_argument("--models", default="hybrid,reference", help="ordered comma list: hybrid,hybrid_iter,reference,tnn")
    p.add_argument("--model", help="hybrid model directory (for hybrid/hybrid_iter rows)")
    p.add_argument("--tnn", help="trained baseline directory; trained fresh when omitted")
    p.add_argument("--report", required=True, help="report output directory")
    p.add_argument("--seed", type=int, default=0, help="baseline training seed")
    p.add_argument("--solver-iters", type=int, default=200)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit_Usage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _USAGE_EXIT
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ConvergenceError, EnvelopeError, DivergenceError, SizingError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return _SOLVER_EXIT
    except (SchemaError, ConfigurationError, DomainError, OSError) as exc:
        print(f"i/o or schema failure: {exc}", file=sys.stderr)
        return _IO_EXIT


def _cmd_design(args) -> int:
    from .cycle import design_point, save_config

    cfg = design_point(_load_design_spec(args.spec))
    save_config(cfg, args.out)
    _write_manifest(args.out, "design", vars(args))
    print(f"sized engine written to {args.out}")
    return 0


def _cmd_gen_mc(args) -> int:
    from .cycle import load_config
    from .data import gen_mc, save_split

    cfg = load_config(args.cfg)
    sd, report = gen_mc(cfg, n=args.n, split_ratio=args.split, seed=args.seed, jobs=args.jobs)
    save_split(sd, args.out)
    _write_manifest(args.out, "gen-mc", vars(args) | {"rejections": report["rejections"]})
    print(f"{len(sd.train)} train / {len(sd.test)} test samples ({report['rejections']} rejections)")
    return 0


def _cmd_gen_fd(args) -> int:
    from .cycle import degrade_config, load_config
    from .data import attach_w2_w25, extract_quasi_steady, gen_flight_series, load_mission, save_split, split_dataset

    cfg = load_config(args.cfg)
    degraded = degrade_config(cfg, _load_degradation(args.degradation))
    mission = load_mission(args.mission)
    series = gen_flight_series(degraded, mission, noise=_load_noise(args.noise), seed=args.seed)
    quasi = extract_quasi_steady(series)
    fd, report = attach_w2_w25(quasi, cfg, jobs=args.jobs)
    sd = split_dataset(fd, args.split, seed=args.seed)
    save_split(sd, args.out)
    _write_manifest(
        args.out,
        "gen-fd",
        vars(args) | {"series_failures": len(series.failures), "attach_dropped": report["dropped"]},
    )
    print(
        f"{len(series.time)} series steps -> {len(quasi)} quasi-steady -> "
        f"{len(sd.train)} train / {len(sd.test)} test ({report['dropped']} dropped)"
    )
    return 0


def _cmd_pretrain(args) -> int:
    from .cascade import build_model
    from .cycle import load_config
    from .data import load_split
    from .training import pretrain_mc

    cfg = load_config(args.cfg)
    data = load_split(args.data)
    model = build_model(seed=args.model_seed, bleeds=cfg.bleeds, include_ma2=args.include_ma2)
    _, history = pretrain_mc(
        model, data, _train_config(args), cfg.areas, cfg.shafts, cfg.gas, out_dir=args.model_out
    )
    _write_manifest(args.model_out, "pretrain", vars(args))
    print(f"pretrained {args.epochs} epochs; final loss {history[-1]['loss']:.6e}")
    return 0


def _cmd_train_fd(args) -> int:
    from .cascade import load_model
    from .cycle import load_config
    from .data import load_split
    from .training import train_fd

    cfg = load_config(args.cfg)
    data = load_split(args.data)
    model = load_model(os.path.join(args.model, "model") if os.path.isdir(os.path.join(args.model, "model")) else args.model)
    selector = args.select.split(",")
    _, history = train_fd(
        model, data, _train_config(args), selector, cfg.areas, cfg.shafts, cfg.gas, out_dir=args.model_out
    )
    _write_manifest(args.model_out, "train-fd", vars(args))
    final = history[-1]["loss"] if history else float("nan")
    print(f"flight-data training done; final loss {final:.6e}")
    return 0


def _model_dir(path: str) -> str:
    inner = os.path.join(path, "model")
    return inner if os.path.isdir(inner) else path


def _cmd_solve_w(args) -> int:
    from .cascade import load_model
    from .cycle import load_config
    from .data import load_dataset
    from .textio import fmt
    from .wsolve import WSolveOptions, solve_w_batch

    cfg = load_config(args.cfg)
    model = load_model(_model_dir(args.model))
    ds = load_dataset(os.path.join(args.data, "test.ds"))
    flows, results = solve_w_batch(
        model, ds, cfg.areas, cfg.gas, cfg.shafts, cfg.design, init_scale=args.init_scale
    )
    lines = ["# wsolve-results v1", "# index w2 w25 objective grad_norm iterations converged"]
    for k, res in enumerate(results):
        lines.append(
            f"{k} {fmt(res.w2)} {fmt(res.w25)} {fmt(res.objective)} {fmt(res.grad_norm)} "
            f"{res.iterations} {int(res.converged)}"
        )
    write_text(args.out, "\n".join(lines) + "\n")
    n_conv = sum(res.converged for res in results)
    print(f"solved {len(results)} samples ({n_conv} converged) -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    from .cascade import Y_SCHEMA, cascade_forward, load_model
    from .cycle import load_config
    from .data import load_split, reference_t6
    from .metrics import compare_report, load_tnn, tnn_predict, train_tnn_baseline
    from .nn import TrainConfig
    from .wsolve import solve_w_batch

    t6_col = Y_SCHEMA.index("T6")

    cfg = load_config(args.cfg)
    data = load_split(args.data)
    test = data.test
    truth = test.y[:, 0]
    names = [name.strip() for name in args.models.split(",") if name.strip()]
    predictions = {}
    model = None
    for name in names:
        if name in ("hybrid", "hybrid_iter"):
            if args.model is None:
                raise ConfigurationError(f"--model required for {name!r}")
            model = model or load_model(_model_dir(args.model))
            if name == "hybrid":
                pred, _ = cascade_forward(model, test.x, test.x_schema)
                predictions[name] = pred[:, t6_col]
            else:
                flows, _ = solve_w_batch(model, test, cfg.areas, cfg.gas, cfg.shafts, cfg.design)
                x = test.x.copy()
                x[:, test.x_schema.index("W2")] = flows[:, 0]
                x[:, test.x_schema.index("W25")] = flows[:, 1]
                pred, _ = cascade_forward(model, x, test.x_schema)
                predictions[name] = pred[:, t6_col]
        elif name == "reference":
            t6 = reference_t6(cfg, test)
            if not np.isfinite(t6).all():
                raise ConvergenceError("reference model failed on some evaluation samples")
            predictions[name] = t6
        elif name == "tnn":
            if args.tnn:
                baseline = load_tnn(args.tnn)
            else:
                baseline, _ = train_tnn_baseline(data, TrainConfig(seed=args.seed))
            predictions[name] = tnn_predict(baseline, test)
        else:
            raise ConfigurationError(f"unknown model row {name!r}")
    stats = compare_report(predictions, truth, args.report)
    _write_manifest(args.report, "eval", vars(args))
    for name, st in stats.items():
        print(f"{name}: mean={st.mean:.4f} max={st.max:.4f}")
    return 0


_COMMANDS = {
    "design": _cmd_design,
    "gen-mc": _cmd_gen_mc,
    "gen-fd": _cmd_gen_fd,
    "pretrain": _cmd_pretrain,
    "train-fd": _cmd_train_fd,
    "solve-w": _cmd_solve_w,
    "eval": _cmd_eval,
}


if __name__ == "__main__":
    sys.exit(main())
