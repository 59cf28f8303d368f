"""
sas_pipeline.synthgen
~~~~~~~~~~~~~~~~~~~~~
Seeded two-class 2-D datasets plus the homophily graph built over them.

* xor       – class A from N((1,1),Σ) ∪ N((−1,−1),Σ), class B from
              N((1,−1),Σ) ∪ N((−1,1),Σ), Σ = diag(0.75, 0.75)
* gaussian  – class A ~ N((1,1),Σ′), class B ~ N((−1,−1),Σ′), Σ′ = diag(3, 3)

Graph: G(n, p) inside each class with the requested mean degree (e intra
edges in total), then round(e·(1−ρ)/ρ) distinct inter-class edges drawn
uniformly – e/4 at ρ = 0.8.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, Splits
from .errors import ContractError, InputError
from .graph import Graph, build_graph
from .log_utils import get_logger
from .models import SynthConfig

logger = get_logger(__name__)

CLASS_A, CLASS_B = 0, 1
XOR_VARIANCE = 0.75
GAUSSIAN_VARIANCE = 3.0

__all__ = [
    "SynthDataset",
    "gen_xor",
    "gen_gaussian",
    "build_homophily_graph",
    "measure_homophily",
    "bayes_oracle",
    "generate",
]


@dataclass(frozen=True, eq=False)
class SynthDataset:
    dataset: Dataset
    graph: Graph
    config: SynthConfig


def _feature_rng(config: SynthConfig) -> np.random.Generator:
    return np.random.default_rng([config.seed, 0])


def _graph_rng(config: SynthConfig) -> np.random.Generator:
    return np.random.default_rng([config.seed, 1])


def _balanced_labels(config: SynthConfig) -> tuple[np.ndarray, Splits]:
    """Nodes are laid out train | val | test; each split alternates A, B."""
    sizes = (config.n_train, config.n_val, config.n_test)
    labels = np.concatenate([np.arange(s) % 2 for s in sizes]).astype(np.int64)
    edges = np.cumsum((0,) + sizes)
    splits = Splits(
        train=np.arange(edges[0], edges[1]),
        val=np.arange(edges[1], edges[2]),
        test=np.arange(edges[2], edges[3]),
    )
    return labels, splits


def gen_xor(config: SynthConfig) -> Dataset:
    if config.kind != "xor":
        raise ContractError(f"gen_xor called with kind={config.kind!r}")
    rng = _feature_rng(config)
    labels, splits = _balanced_labels(config)
    n = labels.size
    # each class is an equal mixture of its two diagonal corners
    sign0 = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    sign1 = np.where(labels == CLASS_A, sign0, -sign0)
    means = np.column_stack([sign0, sign1])
    features = means + rng.normal(scale=np.sqrt(XOR_VARIANCE), size=(n, 2))
    return Dataset(features, labels, 2, splits, name=f"xor-seed{config.seed}")


def gen_gaussian(config: SynthConfig) -> Dataset:
    if config.kind != "gaussian":
        raise ContractError(f"gen_gaussian called with kind={config.kind!r}")
    rng = _feature_rng(config)
    labels, splits = _balanced_labels(config)
    n = labels.size
    centre = np.where(labels == CLASS_A, 1.0, -1.0)[:, None]
    features = centre + rng.normal(scale=np.sqrt(GAUSSIAN_VARIANCE), size=(n, 2))
    return Dataset(features, labels, 2, splits, name=f"gaussian-seed{config.seed}")


# ───────────────────────── graph construction ───────────────────────────────
def _pair_from_index(k: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Invert the row-major enumeration of pairs i < j over n items."""
    k = np.asarray(k, dtype=np.int64)
    total = n * (n - 1) // 2
    # r counts pairs from the end; row i holds n-1-i pairs
    r = total - 1 - k
    t = np.floor((np.sqrt(8.0 * r + 1.0) - 1.0) / 2.0).astype(np.int64)
    # integer fix-up of the float estimate: largest t with t(t+1)/2 ≤ r
    t = np.where(t * (t + 1) // 2 > r, t - 1, t)
    t = np.where((t + 1) * (t + 2) // 2 <= r, t + 1, t)
    i = n - 2 - t
    j = k - (i * (2 * n - i - 1)) // 2 + i + 1
    return i, j


def _erdos_renyi(nodes: np.ndarray, avg_degree: float,
                 rng: np.random.Generator) -> np.ndarray:
    """G(n, p) with p = avg_degree / (n − 1): Binomial edge count, then distinct uniform pairs."""
    n = nodes.size
    if n < 2 or avg_degree <= 0:
        return np.empty((0, 2), dtype=np.int64)
    p = min(1.0, avg_degree / (n - 1))
    total = n * (n - 1) // 2
    m = int(rng.binomial(total, p))
    picks = np.sort(rng.choice(total, size=m, replace=False))
    i, j = _pair_from_index(picks, n)
    return np.column_stack([nodes[i], nodes[j]])


def build_homophily_graph(labels: np.ndarray, config: SynthConfig,
                          rng: np.random.Generator | None = None) -> Graph:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    classes = np.unique(labels)
    if not set(classes.tolist()) <= {CLASS_A, CLASS_B}:
        raise InputError(f"homophily graph needs binary labels, got classes {classes.tolist()}")
    rng = rng if rng is not None else _graph_rng(config)

    nodes_a = np.flatnonzero(labels == CLASS_A)
    nodes_b = np.flatnonzero(labels == CLASS_B)
    intra = np.vstack([
        _erdos_renyi(nodes_a, config.intra_avg_degree, rng),
        _erdos_renyi(nodes_b, config.intra_avg_degree, rng),
    ])
    e = intra.shape[0]
    rho = config.homophily_ratio
    n_inter = int(round(e * (1.0 - rho) / rho))
    capacity = nodes_a.size * nodes_b.size
    if n_inter > capacity:
        raise InputError(
            f"{n_inter} inter-class edges requested but only {capacity} A–B pairs exist"
        )
    picks = rng.choice(capacity, size=n_inter, replace=False) if n_inter else np.empty(0, np.int64)
    inter = np.column_stack([nodes_a[picks // max(nodes_b.size, 1)],
                             nodes_b[picks % max(nodes_b.size, 1)]])

    graph = build_graph(np.vstack([intra, inter]), labels.size)
    logger.debug("homophily graph: %d intra + %d inter edges over %d nodes",
                 e, n_inter, labels.size)
    return graph


def measure_homophily(graph: Graph, labels: np.ndarray) -> float:
    """Fraction of undirected edges whose endpoints share a label."""
    edges = graph.edge_array()
    if edges.shape[0] == 0:
        raise InputError("homophily is undefined on a graph without edges")
    labels = np.asarray(labels)
    return float(np.mean(labels[edges[:, 0]] == labels[edges[:, 1]]))


def bayes_oracle(kind: str, features: np.ndarray) -> np.ndarray:
    """Optimal feature-only rule: sign(x0·x1) for xor, sign(x0+x1) for gaussian (0 → A)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ContractError(f"bayes_oracle expects N×2 features, got {x.shape}")
    if kind == "xor":
        score = x[:, 0] * x[:, 1]
    elif kind == "gaussian":
        score = x[:, 0] + x[:, 1]
    else:
        raise ContractError(f"unknown synthetic kind {kind!r}")
    return np.where(score >= 0, CLASS_A, CLASS_B).astype(np.int64)


def generate(config: SynthConfig) -> SynthDataset:
    """Features, labels, splits and graph for *config*; fully determined by its seed."""
    dataset = gen_xor(config) if config.kind == "xor" else gen_gaussian(config)
    graph = build_homophily_graph(dataset.labels, config)
    logger.info("generated %s: %d nodes, %d edges, homophily %.3f",
                dataset.name, dataset.num_nodes, graph.num_edges,
                measure_homophily(graph, dataset.labels) if graph.num_edges else float("nan"))
    return SynthDataset(dataset=dataset, graph=graph, config=config)
