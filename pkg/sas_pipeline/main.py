"""CLI entry-point: one subcommand per workflow, exit codes 0 / 1 / 2."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Callable, Sequence

import pandas as pd
from pydantic import ValidationError

from . import io_utils, pipeline, settings
from .errors import ConfigError, SasError
from .log_utils import ROOT_NAME, attach_file_log, get_logger
from .mlp import load_checkpoint, save_checkpoint
from .models import (
    KSetting,
    MlpShape,
    PipelineSpec,
    PropagationConfig,
    PropagationMode,
    SynthConfig,
    TrainConfig,
)
from .plotting import make_k_curve_pdf
from .synthgen import generate, measure_homophily

logger = get_logger(__name__)


# ───────────────────────── argument helpers ─────────────────────────────────
def _k_setting(raw: str) -> KSetting:
    if raw.strip().lower() == "auto":
        return "auto"
    try:
        return int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"K must be an integer or 'auto', got {raw!r}") from None


def _add_spec_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help="sas-a | sas-b | sgc | gfnn | mlp")
    src.add_argument("--steps", help="T/A sequence such as T-T-A-A")
    p.add_argument("--layers", type=int, default=2, help="L for presets (default 2)")
    p.add_argument("--k", type=_k_setting, default=None,
                   help="aggregation steps for presets, or 'auto' (default 2)")
    p.add_argument("--mode", choices=[m.value for m in PropagationMode], default=None,
                   help="propagation mode for --steps (presets fix it)")
    p.add_argument("--alpha", type=float, default=0.1, help="residual weight α")
    p.add_argument("--max-k", type=int, default=20, help="upper bound for K='auto'")
    p.add_argument("--hidden", type=int, default=16, help="hidden width")
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=0, help="0 = full batch")
    p.add_argument("--patience", type=int, default=None, help="early stop on val loss")


def _add_output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, default=None, help="output folder")
    p.add_argument("--omit-timings", action="store_true",
                   help="leave wall-clock timings out so reruns are byte-identical")
    p.add_argument("--workers", type=int, default=None, help="parallel cells / SpMM blocks")


def _spec_from_args(args: argparse.Namespace, seed: int = 0) -> PipelineSpec:
    mlp = MlpShape(hidden_dim=args.hidden, dropout=args.dropout,
                   weight_decay=args.weight_decay)
    train = TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                        seed=seed, patience=args.patience)
    prop = PropagationConfig(mode=args.mode or PropagationMode.NO_RESIDUAL, alpha=args.alpha,
                             max_k=args.max_k, k="auto" if args.k == "auto" else 2)
    if args.preset:
        k = args.k if args.k is not None else 2
        return pipeline.preset(args.preset, args.layers, k, mlp=mlp, train=train,
                               propagation=prop)
    if isinstance(args.k, int):
        raise ConfigError("--k only applies to presets; the steps string fixes K")
    return PipelineSpec(steps=args.steps, mlp=mlp, train=train, propagation=prop)


def _workers(args: argparse.Namespace) -> int:
    return args.workers if args.workers else settings.default_workers()


def _out_dir(args: argparse.Namespace, default: str) -> Path:
    out = args.out if args.out is not None else settings.output_root() / default
    out.mkdir(parents=True, exist_ok=True)
    attach_file_log(out)
    return out


# ───────────────────────── subcommands ──────────────────────────────────────
def cmd_synth(args: argparse.Namespace) -> int:
    config = SynthConfig(kind=args.kind, n_train=args.n_train, n_val=args.n_val,
                         n_test=args.n_test, homophily_ratio=args.rho,
                         intra_avg_degree=args.degree, seed=args.seed)
    out = _out_dir(args, f"{args.kind}-seed{args.seed}")
    synth = generate(config)
    manifest = io_utils.export_dataset(synth.graph, synth.dataset, out)
    if synth.graph.num_edges:
        logger.info("measured homophily %.4f",
                    measure_homophily(synth.graph, synth.dataset.labels))
    print(manifest)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args, args.seed)
    graph, dataset = io_utils.load_dataset(args.manifest)
    out = _out_dir(args, f"train/{dataset.name}_{spec.label}_seed{args.seed}")
    run = pipeline.fit_pipeline(spec, dataset, graph, workers=_workers(args))
    save_checkpoint(run.model, out / "model.json", train=spec.train, seed=args.seed)
    path = io_utils.write_result_json(run.result, out / "result.json",
                                      include_timings=not args.omit_timings)
    print(path)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model, ckpt = load_checkpoint(args.checkpoint)
    spec = _spec_from_args(args, ckpt.seed)
    graph, dataset = io_utils.load_dataset(args.manifest)
    out = _out_dir(args, f"eval/{dataset.name}_{spec.label}_seed{ckpt.seed}")
    result = pipeline.evaluate_model(spec, model, dataset, graph, workers=_workers(args))
    path = io_utils.write_result_json(result, out / "eval.json",
                                      include_timings=not args.omit_timings)
    print(path)
    return 0


def cmd_inductive(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args, args.seed)
    train_graph, train_ds = io_utils.load_dataset(args.train_manifest)
    test_graph, test_ds = io_utils.load_dataset(args.test_manifest)
    out = _out_dir(args, f"inductive/{train_ds.name}_{test_ds.name}_{spec.label}_seed{args.seed}")
    run = pipeline.fit_inductive(spec, train_ds, train_graph, test_ds, test_graph,
                                 workers=_workers(args))
    save_checkpoint(run.model, out / "model.json", train=spec.train, seed=args.seed)
    path = io_utils.write_result_json(run.result, out / "result.json",
                                      include_timings=not args.omit_timings)
    print(path)
    return 0


def cmd_sweep_k(args: argparse.Namespace) -> int:
    if args.k_max < 1:
        raise ConfigError(f"--k-max must be ≥ 1, got {args.k_max}")
    spec = _spec_from_args(args)
    graph, dataset = io_utils.load_dataset(args.manifest)
    out = _out_dir(args, f"sweep-k/{dataset.name}_{spec.label}")
    frames = [pipeline.sweep_k(spec, dataset, graph, args.k_max, seed, workers=_workers(args))
              for seed in args.seeds]
    curve = pd.concat(frames, ignore_index=True)
    path = io_utils.write_frame_csv(curve, out / "k_sweep.csv")
    if args.pdf:
        make_k_curve_pdf(curve, out / "k_sweep.pdf", title=f"{dataset.name} – {spec.label}")
    print(path)
    return 0


def cmd_table5(args: argparse.Namespace) -> int:
    out = _out_dir(args, "table5")
    mlp = MlpShape(hidden_dim=args.hidden)
    train = TrainConfig(learning_rate=args.lr, epochs=args.epochs)
    grid = pipeline.interleaving_grid(args.seeds, mlp=mlp, train=train, n_train=args.n_train,
                                      n_test=args.n_test, workers=_workers(args))
    io_utils.write_frame_csv(grid.cells, out / "table5_cells.csv")
    path = io_utils.write_frame_csv(grid.summary, out / "table5.csv")
    if args.xlsx:
        io_utils.write_excel(out / "table5.xlsx", grid.cells, grid.summary)
    print(path)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    manifest = settings.load_experiment_manifest(args.experiment)
    specs = pipeline.specs_from_manifest(manifest)
    graph, dataset = io_utils.load_dataset(Path(manifest.dataset))
    test_graph = test_ds = None
    if manifest.test_dataset:
        test_graph, test_ds = io_utils.load_dataset(Path(manifest.test_dataset))
    if args.out is None and manifest.output:
        args.out = Path(manifest.output)
    out = _out_dir(args, f"run/{Path(args.experiment).stem}")

    include = not args.omit_timings
    res = pipeline.sweep(specs, dataset, graph, manifest.seeds, workers=_workers(args),
                         test_dataset=test_ds, test_graph=test_graph, include_timings=include)
    io_utils.write_results_json(res.results, out / "results.json", include_timings=include)
    io_utils.write_frame_csv(res.cells, out / "cells.csv")
    path = io_utils.write_frame_csv(res.summary, out / "summary.csv")
    if args.xlsx:
        io_utils.write_excel(out / "results.xlsx", res.cells, res.summary)
    print(path)
    return 0


def cmd_convert_cora(args: argparse.Namespace) -> int:
    out = _out_dir(args, "cora")
    manifest = io_utils.convert_cora(args.content, args.cites, out, seed=args.seed)
    print(manifest)
    return 0


# ───────────────────────── parser ───────────────────────────────────────────
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sas_pipeline",
        description="Two-stage node classification: MLP training + graph propagation",
    )
    parser.add_argument("--log-level", default=None, help="DEBUG / INFO / WARNING …")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate and export a synthetic dataset")
    p.add_argument("kind", choices=["xor", "gaussian"])
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-val", type=int, default=0)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--rho", type=float, default=0.8, help="edge homophily ratio")
    p.add_argument("--degree", type=float, default=3.0, help="mean intra-class degree")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train and evaluate one pipeline")
    p.add_argument("manifest", type=Path)
    _add_spec_args(p)
    p.add_argument("--seed", type=int, default=0)
    _add_output_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model checkpoint")
    p.add_argument("manifest", type=Path)
    p.add_argument("--checkpoint", type=Path, required=True)
    _add_spec_args(p)
    _add_output_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inductive", help="train on one graph, evaluate on another")
    p.add_argument("train_manifest", type=Path)
    p.add_argument("test_manifest", type=Path)
    _add_spec_args(p)
    p.add_argument("--seed", type=int, default=0)
    _add_output_args(p)
    p.set_defaults(func=cmd_inductive)

    p = sub.add_parser("sweep-k", help="accuracy against the number of aggregation steps")
    p.add_argument("manifest", type=Path)
    _add_spec_args(p)
    p.add_argument("--k-max", type=int, default=20)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--pdf", action="store_true", help="also write k_sweep.pdf")
    _add_output_args(p)
    p.set_defaults(func=cmd_sweep_k)

    p = sub.add_parser("table5", help="six T/A interleavings on XOR and Gaussian data")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--xlsx", action="store_true", help="also write an Excel workbook")
    _add_output_args(p)
    p.set_defaults(func=cmd_table5)

    p = sub.add_parser("run", help="run an experiment manifest")
    p.add_argument("experiment", type=Path)
    p.add_argument("--xlsx", action="store_true", help="also write an Excel workbook")
    _add_output_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("convert-cora", help="convert Planetoid .content/.cites files")
    p.add_argument("content", type=Path)
    p.add_argument("cites", type=Path)
    p.add_argument("--seed", type=int, default=0, help="seed of the 5/18/37 %% split")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_convert_cora)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler: Callable[[argparse.Namespace], int] = args.func
    try:
        get_logger(ROOT_NAME, args.log_level or settings.log_level())
        return handler(args)
    except SasError as exc:
        print(f"sas_pipeline: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValidationError as exc:
        print(f"sas_pipeline: invalid configuration: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError) as exc:
        print(f"sas_pipeline: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
