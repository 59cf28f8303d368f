import numpy as np
import pytest

from sas_pipeline.dataset import Dataset, Splits
from sas_pipeline.errors import ConfigError, InputError
from sas_pipeline.graph import build_graph
from sas_pipeline.io_utils import export_dataset, load_dataset
from sas_pipeline.mlp import save_checkpoint, load_checkpoint
from sas_pipeline.models import (
    ExperimentManifest,
    MlpShape,
    PipelineSpec,
    PropagationMode,
    SynthConfig,
    TaskKind,
    TrainConfig,
)
from sas_pipeline.pipeline import (
    INTERLEAVINGS,
    INTERLEAVING_REFERENCE,
    _random_guess,
    evaluate_model,
    fit_pipeline,
    interleaving_grid,
    preset,
    run_inductive,
    run_pipeline,
    specs_from_manifest,
    sweep,
    sweep_k,
)
from sas_pipeline.synthgen import generate


# ───────────────────────── specs & presets ──────────────────────────────────
def test_presets_build_expected_steps():
    assert preset("SGC", 1, 2).label == "A-A-T"
    sas_a = preset("sas-a", 2, 2)
    assert sas_a.label == "T-T-A-A"
    assert sas_a.propagation.mode is PropagationMode.NO_RESIDUAL
    assert preset("sas-b", 2, 3).propagation.mode is PropagationMode.RESIDUAL
    assert preset("GfNN", 2, 2).label == "A-A-T-T"
    assert preset("gfnn", 2, 1).label == "A-T-T"
    assert preset("mlp", 3).label == "T-T-T"
    auto = preset("sas-a", 2, "auto")
    assert auto.auto_k and auto.post_k == 1


def test_unknown_preset_and_auto_without_block():
    with pytest.raises(ConfigError):
        preset("gcn")
    with pytest.raises(ConfigError):
        preset("sgc", 1, "auto")


@pytest.mark.parametrize("steps", ["T-A-T", "A-T-A-T", "", "T-X"])
def test_invalid_steps(steps):
    with pytest.raises(ValueError):
        PipelineSpec(steps=steps)


def test_spec_derived_counts():
    spec = PipelineSpec(steps="A-T-T-A-A-A")
    assert (spec.pre_k, spec.num_layers, spec.post_k) == (1, 2, 3)


# ───────────────────────── single runs ──────────────────────────────────────
def test_run_is_deterministic_and_complete(small_xor, quick_spec):
    spec = quick_spec("T-T-A-A")
    a = run_pipeline(spec, small_xor.dataset, small_xor.graph)
    b = run_pipeline(spec, small_xor.dataset, small_xor.graph)
    assert a.payload() == b.payload()
    assert set(a.metrics) == {"train", "val", "test"}
    assert a.chosen_k == 2
    assert a.config["steps"] == ["T", "T", "A", "A"]
    assert set(a.timings_ms) == {"preprocess", "train", "inference", "aggregate"}
    for m in a.metrics.values():
        assert 0.0 <= m.accuracy <= 1.0


def test_pure_mlp_has_no_k(small_xor, quick_spec):
    result = run_pipeline(quick_spec("T-T"), small_xor.dataset, small_xor.graph)
    assert result.chosen_k is None
    assert "chosen_k" not in result.payload()


def test_auto_k_reports_trace(small_xor, fast_train):
    spec = preset("sas-a", 2, "auto", train=fast_train, mlp=MlpShape(hidden_dim=8))
    result = run_pipeline(spec, small_xor.dataset, small_xor.graph)
    assert result.chosen_k is not None and 0 <= result.chosen_k <= 20
    assert result.k_trace[result.chosen_k] == max(result.k_trace)


def test_auto_k_without_validation_falls_back_to_train():
    synth = generate(SynthConfig(kind="gaussian", n_train=40, n_test=100, seed=0))
    spec = preset("sas-b", 2, "auto", train=TrainConfig(epochs=30))
    result = run_pipeline(spec, synth.dataset, synth.graph)
    assert result.chosen_k is not None
    assert "val" not in result.metrics


def test_edgeless_graph_sas_equals_bare_mlp(small_xor, quick_spec):
    empty = build_graph([], small_xor.dataset.num_nodes)
    sas = run_pipeline(quick_spec("T-T-A-A"), small_xor.dataset, empty)
    mlp = run_pipeline(quick_spec("T-T"), small_xor.dataset, empty)
    assert sas.metrics["test"].accuracy == mlp.metrics["test"].accuracy


def test_feature_aggregation_uses_plain_powers(small_xor, quick_spec):
    spec = quick_spec("A-A-T")
    residual = spec.model_copy(update={"propagation": spec.propagation.model_copy(
        update={"mode": PropagationMode.RESIDUAL})})
    a = run_pipeline(spec, small_xor.dataset, small_xor.graph)
    b = run_pipeline(residual, small_xor.dataset, small_xor.graph)
    assert a.metrics == b.metrics


# ───────────────────────── inductive ────────────────────────────────────────
def test_same_graph_inductive_equals_transductive(small_xor, quick_spec):
    spec = quick_spec("T-T-A")
    ds, g = small_xor.dataset, small_xor.graph
    assert run_inductive(spec, ds, g, ds, g).payload() == run_pipeline(spec, ds, g).payload()


def test_inductive_on_a_second_graph(small_xor, quick_spec):
    other = generate(SynthConfig(kind="xor", n_train=1, n_test=300, seed=9))
    test_ds = Dataset(other.dataset.features, other.dataset.labels, 2,
                      Splits(test=np.arange(other.dataset.num_nodes)), name="other")
    result = run_inductive(quick_spec("T-T-A-A"), small_xor.dataset, small_xor.graph,
                           test_ds, other.graph)
    assert result.task is TaskKind.INDUCTIVE
    assert set(result.metrics) == {"test"}
    assert result.metrics["test"].count == other.dataset.num_nodes


def test_inductive_rejects_training_labels_on_test_graph(small_xor, quick_spec):
    other = generate(SynthConfig(kind="xor", n_train=10, n_test=50, seed=2))
    with pytest.raises(InputError):
        run_inductive(quick_spec("T-T"), small_xor.dataset, small_xor.graph,
                      other.dataset, other.graph)


# ───────────────────────── stored models ────────────────────────────────────
def test_evaluate_model_reproduces_the_run(small_xor, quick_spec, tmp_path):
    spec = quick_spec("T-T-A-A")
    run = fit_pipeline(spec, small_xor.dataset, small_xor.graph)
    path = save_checkpoint(run.model, tmp_path / "m.json")
    model, _ = load_checkpoint(path)
    again = evaluate_model(spec, model, small_xor.dataset, small_xor.graph)
    assert again.metrics == run.result.metrics
    with pytest.raises(ConfigError):
        evaluate_model(quick_spec("T-A"), model, small_xor.dataset, small_xor.graph)


def test_exported_dataset_replays_exactly(small_xor, quick_spec, tmp_path):
    spec = quick_spec("T-T-A-A")
    graph, ds = load_dataset(export_dataset(small_xor.graph, small_xor.dataset, tmp_path))
    original = run_pipeline(spec, small_xor.dataset, small_xor.graph)
    replay = run_pipeline(spec, ds, graph)
    assert replay.metrics == original.metrics


# ───────────────────────── sweeps ───────────────────────────────────────────
def test_sweep_order_and_single_cell(small_xor, quick_spec):
    specs = [quick_spec("T-T"), quick_spec("A-T")]
    res = sweep(specs, small_xor.dataset, small_xor.graph, [2, 1], workers=3)
    assert res.cells["spec"].tolist() == ["T-T", "T-T", "A-T", "A-T"]
    assert res.cells["seed"].tolist() == [2, 1, 2, 1]
    assert res.summary["spec"].tolist() == ["T-T", "A-T"]
    assert res.summary["runs"].tolist() == [2, 2]
    single = run_pipeline(specs[1].with_seed(1), small_xor.dataset, small_xor.graph)
    assert res.results[3].payload() == single.payload()
    serial = sweep(specs, small_xor.dataset, small_xor.graph, [2, 1], workers=1)
    assert [r.payload() for r in serial.results] == [r.payload() for r in res.results]


def test_sweep_summary_uses_population_std(small_xor, quick_spec):
    res = sweep([quick_spec("T-T")], small_xor.dataset, small_xor.graph, [0, 1, 2],
                include_timings=False)
    acc = res.cells["test_accuracy"].to_numpy()
    assert res.summary["test_accuracy_std"].iloc[0] == pytest.approx(np.std(acc))
    assert "train_ms" not in res.cells.columns


def test_sweep_needs_specs_and_seeds(small_xor):
    with pytest.raises(ConfigError):
        sweep([], small_xor.dataset, small_xor.graph, [0])


def test_sweep_k_row_zero_is_the_bare_classifier(small_xor, quick_spec):
    curve = sweep_k(quick_spec("T-T-A"), small_xor.dataset, small_xor.graph, 5, seed=4)
    assert curve["k"].tolist() == list(range(6))
    mlp = run_pipeline(quick_spec("T-T").with_seed(4), small_xor.dataset, small_xor.graph)
    assert curve.loc[0, "test_accuracy"] == mlp.metrics["test"].accuracy
    assert list(curve.columns) == ["k", "seed", "train_accuracy", "val_accuracy", "test_accuracy"]


def test_specs_from_manifest():
    manifest = ExperimentManifest.model_validate({
        "dataset": "d/manifest.json",
        "pipelines": [{"preset": "sas-b", "k": 3}, {"steps": "A-A-T"}],
        "propagation": {"alpha": 0.2},
    })
    specs = specs_from_manifest(manifest)
    assert [s.label for s in specs] == ["T-T-A-A-A", "A-A-T"]
    assert specs[0].propagation.alpha == 0.2
    with pytest.raises(ValueError):
        ExperimentManifest.model_validate({"dataset": "x", "pipelines": [{}]})


# ───────────────────────── interleaving grid ────────────────────────────────
def test_random_rows_draw_independently_per_kind():
    xor = _random_guess(0, "xor", 400, 2)
    gaussian = _random_guess(0, "gaussian", 400, 2)
    assert not np.array_equal(xor, gaussian)
    assert np.array_equal(xor, _random_guess(0, "xor", 400, 2))
    assert set(np.unique(xor)) <= {0, 1}


# Five-seed means at the default shape (h=16, 500 epochs, lr 1e-2, γ=5e-4)
# for the cells that do not land on INTERLEAVING_REFERENCE.
GRID_MEANS = {
    "xor":      {"A-A-T-T": 0.614, "A-T-T": 0.599, "T-T": 0.748},
    "gaussian": {"A-A-T": 0.880, "A-A-T-T": 0.875, "A-T-T": 0.847,
                 "T-T": 0.766, "T-T-A": 0.830, "T-T-A-A": 0.856},
}


@pytest.mark.slow
def test_interleaving_grid_means_and_orderings():
    summary = interleaving_grid(seeds=range(5)).summary
    assert summary["pipeline"].tolist()[:4] == ["Random", "Random", "Optimal", "Optimal"]

    def mean(steps, kind):
        row = summary[(summary.pipeline == steps) & (summary.dataset == kind)]
        return row["mean"].iloc[0]

    for kind, cells in GRID_MEANS.items():
        for steps, expected in cells.items():
            assert mean(steps, kind) == pytest.approx(expected, abs=0.03), (kind, steps)
    reference = dict(zip(INTERLEAVINGS, INTERLEAVING_REFERENCE["xor"]))
    for steps in ("A-A-T", "T-T-A", "T-T-A-A"):
        assert mean(steps, "xor") == pytest.approx(reference[steps], abs=0.03), steps

    for kind in ("xor", "gaussian"):
        # aggregating the MLP output helps, and more steps help more
        assert mean("T-T", kind) < mean("T-T-A", kind) < mean("T-T-A-A", kind)
    # xor is not linearly separable after smoothing the raw features
    assert max(mean(s, "xor") for s in ("A-A-T", "A-A-T-T", "A-T-T")) < mean("T-T", "xor")
    assert mean("A-A-T", "gaussian") > mean("T-T", "gaussian")

    rand = summary[summary.pipeline == "Random"]["mean"]
    assert np.all(np.abs(rand - 0.5) < 0.03)


@pytest.mark.slow
def test_inductive_on_a_disjoint_copy_matches_transductive():
    spec = PipelineSpec(steps="T-T-A-A")
    transductive, inductive = [], []
    for seed in range(5):
        train = generate(SynthConfig(kind="xor", seed=seed))
        copy = generate(SynthConfig(kind="xor", seed=seed + 100))
        test_ds = Dataset(copy.dataset.features, copy.dataset.labels, 2,
                          Splits(test=np.arange(copy.dataset.num_nodes)), name="copy")
        run_spec = spec.with_seed(seed)
        transductive.append(run_pipeline(run_spec, train.dataset, train.graph)
                            .metrics["test"].accuracy)
        inductive.append(run_inductive(run_spec, train.dataset, train.graph, test_ds, copy.graph)
                         .metrics["test"].accuracy)
    assert np.mean(inductive) == pytest.approx(np.mean(transductive), abs=0.05)


# ───────────────────────── reproduction (slow) ──────────────────────────────
@pytest.mark.slow
def test_transform_first_ordering_on_xor():
    means = {}
    for steps in ("T-T-A-A", "T-T", "A-A-T"):
        accs = []
        for seed in range(5):
            synth = generate(SynthConfig(kind="xor", seed=seed))
            spec = PipelineSpec(steps=steps, train=TrainConfig(seed=seed))
            accs.append(run_pipeline(spec, synth.dataset, synth.graph).metrics["test"].accuracy)
        means[steps] = np.mean(accs)
    assert means["T-T-A-A"] - means["T-T"] > 0.05
    assert means["T-T"] - means["A-A-T"] > 0.10


@pytest.mark.slow
def test_linear_boundary_needs_one_layer_on_gaussian():
    gaps = []
    for seed in range(5):
        synth = generate(SynthConfig(kind="gaussian", seed=seed))
        accs = [run_pipeline(PipelineSpec(steps=s, train=TrainConfig(seed=seed)),
                             synth.dataset, synth.graph).metrics["test"].accuracy
                for s in ("A-A-T", "A-A-T-T")]
        gaps.append(accs[0] - accs[1])
    assert abs(np.mean(gaps)) < 0.02


@pytest.mark.slow
def test_dense_graph_oversmooths_in_k_sweep():
    synth = generate(SynthConfig(kind="xor", n_val=100, intra_avg_degree=10.0, seed=0))
    curve = sweep_k(PipelineSpec(steps="T-T-A"), synth.dataset, synth.graph, 20)
    assert curve.loc[20, "test_accuracy"] < curve["test_accuracy"].max()


@pytest.mark.slow
def test_sparse_graph_k_sweep_is_flat():
    synth = generate(SynthConfig(kind="xor", n_val=100, intra_avg_degree=1.5, seed=0))
    curve = sweep_k(PipelineSpec(steps="T-T-A"), synth.dataset, synth.graph, 20)
    tail = curve.loc[1:, "test_accuracy"]
    assert tail.max() - tail.min() < 0.05
