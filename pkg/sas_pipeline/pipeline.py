"""
sas_pipeline.pipeline
~~~~~~~~~~~~~~~~~~~~~
T/A step sequences end-to-end:

    A…A  (before T)   Ŝ^K X, plain powers, computed once
    T…T               L-layer MLP trained on the training split only
    A…A  (after T)    propagation of the class-probability rows P

plus the named presets, seed sweeps, the K sweep and the six-pipeline
interleaving grid on the synthetic XOR / Gaussian datasets.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from .dataset import SPLIT_NAMES, UNLABELED, Dataset
from .errors import ConfigError, DimensionMismatchError, InputError
from .graph import CouplingMatrix, Graph, normalized_coupling
from .log_utils import get_logger
from .metrics import accuracy, micro_f1
from .mlp import MlpModel, TrainTrace, init_mlp, predict_proba, train_mlp
from .models import (
    ExperimentManifest,
    ExperimentResult,
    KSetting,
    MlpShape,
    PipelineSpec,
    PropagationConfig,
    PropagationMode,
    SplitMetrics,
    SynthConfig,
    TaskKind,
    TrainConfig,
)
from .propagation import (
    PredictionMatrix,
    aggregate_features,
    final_labels,
    iter_propagation,
    propagate,
    select_k,
)
from .synthgen import bayes_oracle, generate

logger = get_logger(__name__)

PRESETS = ("sas-a", "sas-b", "sgc", "gfnn", "mlp")

INTERLEAVINGS = ("A-A-T", "A-A-T-T", "A-T-T", "T-T", "T-T-A", "T-T-A-A")
INTERLEAVING_REFERENCE = {
    "xor":      (0.518, 0.555, 0.562, 0.708, 0.807, 0.870),
    "gaussian": (0.927, 0.928, 0.884, 0.804, 0.895, 0.931),
}
TIMING_COLUMNS = ("preprocess_ms", "train_ms", "inference_ms", "aggregate_ms")


# ───────────────────────── presets ──────────────────────────────────────────
def preset(name: str, layers: int = 2, k: KSetting = 2, *,
           mlp: MlpShape | None = None,
           train: TrainConfig | None = None,
           propagation: PropagationConfig | None = None,
           task: TaskKind = TaskKind.TRANSDUCTIVE) -> PipelineSpec:
    """
    sas-a / sas-b → T×L then A×K (Λ = 0 / Λ = αI), sgc → A×K then T,
    gfnn → A×K then T×L, mlp → T×L. Names are case-insensitive.

    ``k="auto"`` is only meaningful for the SAS presets; the post-T block is
    then sized by validation (``select_k``) instead of by the step count.
    """
    key = name.strip().lower()
    if key not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    if layers < 1:
        raise ConfigError(f"L must be ≥ 1, got {layers}")
    auto = k == "auto"
    if not auto and int(k) < 0:
        raise ConfigError(f"K must be ≥ 0, got {k}")
    if auto and key not in ("sas-a", "sas-b"):
        raise ConfigError(f"K='auto' needs a post-transform block; preset {key!r} has none")

    prop = propagation or PropagationConfig()
    if key == "sas-a":
        prop = prop.model_copy(update={"mode": PropagationMode.NO_RESIDUAL})
    elif key == "sas-b":
        prop = prop.model_copy(update={"mode": PropagationMode.RESIDUAL})
    prop = prop.model_copy(update={"k": "auto" if auto else max(int(k), 1)})

    n_agg = 1 if auto else int(k)
    steps = {
        "sas-a": ["T"] * layers + ["A"] * n_agg,
        "sas-b": ["T"] * layers + ["A"] * n_agg,
        "sgc":   ["A"] * n_agg + ["T"],
        "gfnn":  ["A"] * n_agg + ["T"] * layers,
        "mlp":   ["T"] * layers,
    }[key]
    return PipelineSpec(
        steps=steps,
        mlp=mlp or MlpShape(),
        train=train or TrainConfig(),
        propagation=prop,
        task=task,
        preset=key,
    )


def specs_from_manifest(manifest: ExperimentManifest) -> list[PipelineSpec]:
    """One spec per manifest entry, sharing the manifest's hyper-parameters."""
    specs = []
    for entry in manifest.pipelines:
        k = entry.k if entry.k is not None else manifest.propagation.k
        if entry.preset is not None:
            specs.append(preset(entry.preset, entry.layers or 2, k, mlp=manifest.mlp,
                                train=manifest.train, propagation=manifest.propagation))
            continue
        if entry.layers is not None:
            raise ConfigError(f"steps {entry.steps!r}: 'layers' only applies to presets")
        prop = manifest.propagation.model_copy(update={"k": k})
        specs.append(PipelineSpec(steps=entry.steps, mlp=manifest.mlp, train=manifest.train,
                                  propagation=prop))
    return specs


def spec_name(spec: PipelineSpec) -> str:
    """Row key for tables: ``sas-b:T-T-A-A`` or the bare steps string."""
    return f"{spec.preset}:{spec.label}" if spec.preset else spec.label


# ───────────────────────── single run ───────────────────────────────────────
@dataclass(frozen=True, eq=False)
class PipelineRun:
    result: ExperimentResult
    model: MlpModel
    predictions: PredictionMatrix
    trace: TrainTrace | None = None


def _labelled(dataset: Dataset, idx: np.ndarray) -> np.ndarray:
    return idx[dataset.labels[idx] != UNLABELED]


def _selection_fn(spec: PipelineSpec, dataset: Dataset, coupling: CouplingMatrix,
                  features: np.ndarray, workers: int
                  ) -> Callable[[MlpModel], float] | None:
    """Validation accuracy after the post-T block, when there is one."""
    val = _labelled(dataset, dataset.splits.val)
    if spec.post_k == 0 or val.size == 0:
        return None
    y_val = dataset.labels[val]

    def _score(model: MlpModel) -> float:
        p0 = predict_proba(model, features)
        if spec.auto_k:
            return max(select_k(p0, coupling, spec.propagation, y_val, val,
                                workers=workers).trace)
        p = propagate(p0, coupling, spec.propagation, k=spec.post_k, workers=workers)
        return float(np.mean(final_labels(p)[val] == y_val))

    return _score


def _split_metrics(dataset: Dataset, pred: np.ndarray) -> dict[str, SplitMetrics]:
    out: dict[str, SplitMetrics] = {}
    for split, idx in dataset.splits.items():
        idx = _labelled(dataset, idx)
        if idx.size == 0:
            continue
        out[split] = SplitMetrics(
            accuracy=accuracy(pred, dataset.labels, subset=idx),
            micro_f1=micro_f1(pred, dataset.labels, subset=idx),
            count=int(idx.size),
        )
    return out


def _execute(spec: PipelineSpec, train_ds: Dataset, train_graph: Graph,
             eval_ds: Dataset, eval_graph: Graph, *,
             model: MlpModel | None = None, workers: int = 1) -> PipelineRun:
    for ds, g in ((train_ds, train_graph), (eval_ds, eval_graph)):
        if ds.num_nodes != g.num_nodes:
            raise DimensionMismatchError(
                f"{ds.name}: {ds.num_nodes} feature rows but the graph has {g.num_nodes} nodes")
    same = eval_ds is train_ds and eval_graph is train_graph
    timings: dict[str, float] = {}

    # ── pre-T aggregation: Ŝ^K X ──────────────────────────────────────────
    t0 = time.perf_counter()
    coupling = normalized_coupling(train_graph)
    eval_coupling = coupling if same else normalized_coupling(eval_graph)
    x_train = aggregate_features(coupling, train_ds.features, spec.pre_k, workers=workers)
    x_eval = x_train if same else aggregate_features(eval_coupling, eval_ds.features,
                                                     spec.pre_k, workers=workers)
    timings["preprocess"] = (time.perf_counter() - t0) * 1e3

    # ── T block ───────────────────────────────────────────────────────────
    t0 = time.perf_counter()
    trace = None
    if model is None:
        model_init = init_mlp(train_ds.feature_dim, train_ds.num_classes, spec.num_layers,
                              spec.mlp.hidden_dim, dropout=spec.mlp.dropout,
                              weight_decay=spec.mlp.weight_decay, seed=spec.train.seed)
        fit_ds = train_ds.with_features(x_train)
        model, trace = train_mlp(fit_ds, model_init, spec.train,
                                 selection_fn=_selection_fn(spec, train_ds, coupling,
                                                            x_train, workers))
        logger.info("%s seed %d: trained %d epoch(s), best epoch %s",
                    spec.label, spec.train.seed, trace.epochs_run, trace.best_epoch)
    elif model.in_dim != eval_ds.feature_dim or model.out_dim != eval_ds.num_classes:
        raise DimensionMismatchError(
            f"model maps {model.in_dim}→{model.out_dim}, {eval_ds.name} is "
            f"{eval_ds.feature_dim}→{eval_ds.num_classes}")
    timings["train"] = (time.perf_counter() - t0) * 1e3

    # ── inference ─────────────────────────────────────────────────────────
    t0 = time.perf_counter()
    p0 = predict_proba(model, x_eval)
    timings["inference"] = (time.perf_counter() - t0) * 1e3

    # ── post-T aggregation ────────────────────────────────────────────────
    t0 = time.perf_counter()
    chosen_k: int | None = None
    k_trace: list[float] | None = None
    p = p0
    if spec.auto_k:
        # K is chosen on the graph the model was trained on
        p0_train = p0 if same else predict_proba(model, x_train)
        idx = _labelled(train_ds, train_ds.splits.val)
        if idx.size == 0:
            logger.warning("%s: no labelled validation nodes; choosing K on the train split",
                           train_ds.name)
            idx = train_ds.splits.train
        if idx.size == 0:
            raise InputError(f"{train_ds.name}: K='auto' needs labelled validation or train nodes")
        sel = select_k(p0_train, coupling, spec.propagation, train_ds.labels[idx], idx,
                       workers=workers)
        chosen_k, k_trace = sel.best_k, sel.trace
        if same:
            p = sel.predictions
        elif chosen_k > 0:
            p = propagate(p0, eval_coupling, spec.propagation, k=chosen_k, workers=workers)
        logger.info("%s: selected K=%d", spec.label, chosen_k)
    elif spec.post_k > 0:
        chosen_k = spec.post_k
        p = propagate(p0, eval_coupling, spec.propagation, k=spec.post_k, workers=workers)
    timings["aggregate"] = (time.perf_counter() - t0) * 1e3

    pred = final_labels(p)
    task = TaskKind.TRANSDUCTIVE if same else TaskKind.INDUCTIVE
    result = ExperimentResult(
        pipeline=spec.label,
        preset=spec.preset,
        task=task,
        dataset=eval_ds.name if same else f"{train_ds.name}->{eval_ds.name}",
        seed=spec.train.seed,
        metrics=_split_metrics(eval_ds, pred),
        chosen_k=chosen_k,
        k_trace=k_trace,
        best_epoch=trace.best_epoch if trace else None,
        epochs_run=trace.epochs_run if trace else 0,
        config=spec.model_copy(update={"task": task}).model_dump(mode="json"),
        timings_ms={name: round(ms, 3) for name, ms in timings.items()},
    )
    return PipelineRun(result=result, model=model, predictions=p, trace=trace)


def fit_pipeline(spec: PipelineSpec, dataset: Dataset, graph: Graph, *,
                 workers: int = 1) -> PipelineRun:
    """Like ``run_pipeline`` but also hands back the trained model and P."""
    if spec.task is TaskKind.INDUCTIVE:
        raise ConfigError("inductive specs need a test graph; use run_inductive")
    return _execute(spec, dataset, graph, dataset, graph, workers=workers)


def run_pipeline(spec: PipelineSpec, dataset: Dataset, graph: Graph, *,
                 workers: int = 1) -> ExperimentResult:
    """Transductive run: train on the train split, report every labelled split."""
    return fit_pipeline(spec, dataset, graph, workers=workers).result


def fit_inductive(spec: PipelineSpec, train_dataset: Dataset, train_graph: Graph,
                  test_dataset: Dataset, test_graph: Graph, *,
                  workers: int = 1) -> PipelineRun:
    if test_dataset is train_dataset and test_graph is train_graph:
        return _execute(spec, train_dataset, train_graph, train_dataset, train_graph,
                        workers=workers)
    if test_dataset.splits.train.size:
        raise InputError(
            f"{test_dataset.name}: the test graph lists {test_dataset.splits.train.size} "
            "training node(s); inductive evaluation must not see training labels")
    if (test_dataset.feature_dim, test_dataset.num_classes) != (
            train_dataset.feature_dim, train_dataset.num_classes):
        raise DimensionMismatchError(
            f"train graph is {train_dataset.feature_dim}→{train_dataset.num_classes}, "
            f"test graph is {test_dataset.feature_dim}→{test_dataset.num_classes}")
    return _execute(spec, train_dataset, train_graph, test_dataset, test_graph,
                    workers=workers)


def run_inductive(spec: PipelineSpec, train_dataset: Dataset, train_graph: Graph,
                  test_dataset: Dataset, test_graph: Graph, *,
                  workers: int = 1) -> ExperimentResult:
    """
    Train on one graph, classify the nodes of another with its own Ŝ.
    Passing the training graph twice is the transductive run.
    """
    return fit_inductive(spec, train_dataset, train_graph, test_dataset, test_graph,
                         workers=workers).result


def evaluate_model(spec: PipelineSpec, model: MlpModel, dataset: Dataset, graph: Graph, *,
                   workers: int = 1) -> ExperimentResult:
    """Pre-aggregation, inference and post-aggregation with a stored model, no training."""
    if model.num_layers != spec.num_layers:
        raise ConfigError(f"model has {model.num_layers} layer(s), steps {spec.label!r} "
                          f"need {spec.num_layers}")
    return _execute(spec, dataset, graph, dataset, graph, model=model, workers=workers).result


# ───────────────────────── tables ───────────────────────────────────────────
def cells_frame(results: Sequence[ExperimentResult], *, names: Sequence[str] | None = None,
                include_timings: bool = True) -> pd.DataFrame:
    """One row per run; empty cells where a split was not evaluated."""
    rows = []
    for i, r in enumerate(results):
        row = {"spec": names[i] if names else r.pipeline, "seed": r.seed}
        for split in SPLIT_NAMES:
            m = r.metrics.get(split)
            row[f"{split}_accuracy"] = m.accuracy if m else np.nan
        test = r.metrics.get("test")
        row["test_micro_f1"] = test.micro_f1 if test else np.nan
        row["chosen_k"] = r.chosen_k if r.chosen_k is not None else pd.NA
        if include_timings:
            for col in TIMING_COLUMNS:
                row[col] = (r.timings_ms or {}).get(col.removesuffix("_ms"), np.nan)
        rows.append(row)
    df = pd.DataFrame(rows)
    if not df.empty:
        df["chosen_k"] = df["chosen_k"].astype("Int64")
    return df


def summarize(cells: pd.DataFrame, key: str = "spec") -> pd.DataFrame:
    """Mean and population std (ddof=0) of every metric column, first-seen key order."""
    metric_cols = [c for c in cells.columns
                   if c.endswith("_accuracy") or c.endswith("_micro_f1")]
    grouped = cells.groupby(key, sort=False)
    out = pd.DataFrame({"runs": grouped.size()})
    for col in metric_cols:
        out[f"{col}_mean"] = grouped[col].mean()
        out[f"{col}_std"] = grouped[col].std(ddof=0)
    return out.reset_index()


@dataclass(frozen=True, eq=False)
class SweepResult:
    results: list[ExperimentResult]
    cells: pd.DataFrame
    summary: pd.DataFrame


def sweep(specs: Sequence[PipelineSpec], dataset: Dataset, graph: Graph,
          seeds: Sequence[int], *, workers: int = 1,
          test_dataset: Dataset | None = None, test_graph: Graph | None = None,
          include_timings: bool = True) -> SweepResult:
    """
    Every (spec, seed) cell, in parallel when *workers* > 1. Rows come back
    in spec order then seed order whatever the completion order.
    """
    if not specs or not seeds:
        raise ConfigError("sweep needs at least one spec and one seed")
    if (test_dataset is None) != (test_graph is None):
        raise ConfigError("give both test_dataset and test_graph, or neither")
    keys = [(i, seed) for i in range(len(specs)) for seed in seeds]

    def _cell(key: tuple[int, int]) -> ExperimentResult:
        i, seed = key
        spec = specs[i].with_seed(seed)
        if test_dataset is None:
            return run_pipeline(spec, dataset, graph)
        return run_inductive(spec, dataset, graph, test_dataset, test_graph)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell, keys))
    else:
        results = [_cell(k) for k in keys]

    names = [spec_name(specs[i]) for i, _ in keys]
    cells = cells_frame(results, names=names, include_timings=include_timings)
    logger.info("sweep finished: %d spec(s) × %d seed(s)", len(specs), len(seeds))
    return SweepResult(results=results, cells=cells, summary=summarize(cells))


def sweep_k(spec: PipelineSpec, dataset: Dataset, graph: Graph, k_max: int,
            seed: int = 0, *, workers: int = 1) -> pd.DataFrame:
    """
    Train the T block once, then report per-split accuracy for every
    k = 0 … k_max aggregation steps of its predictions (k = 0 is the bare
    classifier). Model selection uses raw validation accuracy.
    """
    if k_max < 1:
        raise ConfigError(f"k_max must be ≥ 1, got {k_max}")
    spec = spec.with_seed(seed)
    coupling = normalized_coupling(graph)
    x = aggregate_features(coupling, dataset.features, spec.pre_k, workers=workers)
    model_init = init_mlp(dataset.feature_dim, dataset.num_classes, spec.num_layers,
                          spec.mlp.hidden_dim, dropout=spec.mlp.dropout,
                          weight_decay=spec.mlp.weight_decay, seed=seed)
    model, _ = train_mlp(dataset.with_features(x), model_init, spec.train)

    p0 = predict_proba(model, x)
    splits = {name: _labelled(dataset, idx) for name, idx in dataset.splits.items()}

    def _row(k: int, p: PredictionMatrix) -> dict:
        pred = final_labels(p)
        row = {"k": k, "seed": seed}
        for name, idx in splits.items():
            row[f"{name}_accuracy"] = (float(np.mean(pred[idx] == dataset.labels[idx]))
                                       if idx.size else np.nan)
        return row

    rows = [_row(0, p0)]
    stream = iter_propagation(p0, coupling, spec.propagation, workers=workers)
    for k, p in enumerate(stream, start=1):
        rows.append(_row(k, p))
        if k >= k_max:
            break
    return pd.DataFrame(rows)


# ───────────────────────── interleaving grid ────────────────────────────────
@dataclass(frozen=True, eq=False)
class GridResult:
    cells: pd.DataFrame
    summary: pd.DataFrame


def _random_guess(seed: int, kind: str, size: int, num_classes: int) -> np.ndarray:
    """Uniform labels for the Random row; xor and gaussian never share a stream."""
    kind_no = tuple(INTERLEAVING_REFERENCE).index(kind)
    return np.random.default_rng([seed, 2, kind_no]).integers(0, num_classes, size=size)


def interleaving_grid(seeds: Sequence[int] = (0, 1, 2, 3, 4), *,
                      mlp: MlpShape | None = None, train: TrainConfig | None = None,
                      n_train: int = 100, n_test: int = 1000,
                      workers: int = 1) -> GridResult:
    """
    Six T/A interleavings × {xor, gaussian}, one fresh synthetic dataset per
    seed, plus Random (uniform guess) and Optimal (Bayes rule) reference rows.
    Summary rows: Random, Optimal, then the pipelines; xor before gaussian.
    """
    if not seeds:
        raise ConfigError("interleaving grid needs at least one seed")
    kinds = tuple(INTERLEAVING_REFERENCE)
    data = {
        (kind, seed): generate(SynthConfig(kind=kind, n_train=n_train, n_test=n_test, seed=seed))
        for kind in kinds for seed in seeds
    }
    specs = {steps: PipelineSpec(steps=steps, mlp=mlp or MlpShape(), train=train or TrainConfig())
             for steps in INTERLEAVINGS}

    rows: list[dict] = []
    for kind in kinds:
        for seed in seeds:
            ds = data[(kind, seed)].dataset
            test = ds.splits.test
            guess = _random_guess(seed, kind, test.size, ds.num_classes)
            rows.append({"pipeline": "Random", "dataset": kind, "seed": seed,
                         "test_accuracy": float(np.mean(guess == ds.labels[test]))})
            oracle = bayes_oracle(kind, ds.features)
            rows.append({"pipeline": "Optimal", "dataset": kind, "seed": seed,
                         "test_accuracy": accuracy(oracle, ds.labels, subset=test)})

    keys = [(steps, kind, seed) for steps in INTERLEAVINGS for kind in kinds for seed in seeds]

    def _cell(key: tuple[str, str, int]) -> dict:
        steps, kind, seed = key
        synth = data[(kind, seed)]
        result = run_pipeline(specs[steps].with_seed(seed), synth.dataset, synth.graph)
        return {"pipeline": steps, "dataset": kind, "seed": seed,
                "test_accuracy": result.metrics["test"].accuracy}

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows.extend(pool.map(_cell, keys))
    else:
        rows.extend(_cell(k) for k in keys)

    cells = pd.DataFrame(rows)
    order = ["Random", "Optimal", *INTERLEAVINGS]
    grouped = cells.groupby(["pipeline", "dataset"], sort=False)["test_accuracy"]
    summary = pd.DataFrame({
        "mean": grouped.mean(),
        "std": grouped.std(ddof=0),
        "runs": grouped.size(),
    }).reset_index()
    summary["_p"] = summary["pipeline"].map(order.index)
    summary["_d"] = summary["dataset"].map(kinds.index)
    summary = (summary.sort_values(["_p", "_d"], kind="stable")
                      .drop(columns=["_p", "_d"])
                      .reset_index(drop=True))
    logger.info("interleaving grid finished over %d seed(s)", len(seeds))
    return GridResult(cells=cells, summary=summary[["pipeline", "dataset", "mean", "std", "runs"]])
