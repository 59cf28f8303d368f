"""
sas_pipeline.propagation
~~~~~~~~~~~~~~~~~~~~~~~~
Aggregation of per-node class-score vectors over the coupling operator:

    P(k) = Λ P(0) + (I − Λ) Ŝ P(k−1)

Λ = 0 (no residual) or Λ = αI (residual); a per-node λ vector may replace
the scalar. Rows are never renormalised after aggregation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigError, ContractError, InputError
from .graph import CouplingMatrix, spmm
from .log_utils import get_logger
from .models import PropagationConfig, PropagationMode

logger = get_logger(__name__)

__all__ = [
    "PredictionMatrix",
    "KSelection",
    "aggregate_once",
    "iter_propagation",
    "propagate",
    "aggregate_features",
    "pick_best_k",
    "select_k",
    "final_labels",
]


@dataclass(frozen=True, eq=False)
class PredictionMatrix:
    """N×C class scores after *k* aggregation steps (k = 0 is the classifier output)."""
    rows: np.ndarray
    k: int = 0

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ContractError(f"prediction rows must be 2-D, got shape {rows.shape}")
        object.__setattr__(self, "rows", rows)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape  # type: ignore[return-value]


@dataclass(frozen=True, eq=False)
class KSelection:
    best_k: int
    predictions: PredictionMatrix
    trace: list[float]            # validation accuracy for k = 0, 1, …


def _lambda_column(config: PropagationConfig, lambdas: np.ndarray | None,
                   n: int) -> np.ndarray | float | None:
    if lambdas is not None:
        lam = np.asarray(lambdas, dtype=np.float64).reshape(-1)
        if lam.size != n:
            raise ContractError(f"expected {n} per-node λ values, got {lam.size}")
        if ((lam < 0.0) | (lam > 1.0)).any():
            raise ContractError("per-node λ values must lie in [0, 1]")
        return lam[:, None]
    if config.mode is PropagationMode.RESIDUAL:
        return config.alpha
    return None


def aggregate_once(p_prev: PredictionMatrix, p0: PredictionMatrix,
                   coupling: CouplingMatrix, config: PropagationConfig,
                   *, lambdas: np.ndarray | None = None,
                   workers: int = 1) -> PredictionMatrix:
    """One step of the update, anchored to *p0*."""
    if p_prev.shape != p0.shape:
        raise ContractError(f"P(k-1) has shape {p_prev.shape}, P(0) has {p0.shape}")
    if p_prev.shape[0] != coupling.num_nodes:
        raise ContractError(
            f"predictions cover {p_prev.shape[0]} nodes, coupling has {coupling.num_nodes}"
        )
    smoothed = spmm(coupling, p_prev.rows, workers=workers)
    lam = _lambda_column(config, lambdas, coupling.num_nodes)
    if lam is None:
        rows = smoothed
    else:
        rows = lam * p0.rows + (1.0 - lam) * smoothed
    return PredictionMatrix(rows=rows, k=p_prev.k + 1)


def iter_propagation(p0: PredictionMatrix, coupling: CouplingMatrix,
                     config: PropagationConfig, *,
                     lambdas: np.ndarray | None = None,
                     workers: int = 1) -> Iterator[PredictionMatrix]:
    """Yield P(1), P(2), … lazily; one SpMM per step."""
    current = p0
    while True:
        current = aggregate_once(current, p0, coupling, config,
                                 lambdas=lambdas, workers=workers)
        yield current


def propagate(p0: PredictionMatrix, coupling: CouplingMatrix,
              config: PropagationConfig, *, k: int | None = None,
              lambdas: np.ndarray | None = None,
              workers: int = 1) -> PredictionMatrix:
    """Apply *k* (default ``config.k``) sequential aggregation steps to *p0*."""
    steps = config.k if k is None else k
    if steps == "auto":
        raise ConfigError("propagate needs a fixed K; use select_k for K='auto'")
    if int(steps) < 1:
        raise ConfigError(f"K must be ≥ 1, got {steps}")
    result = p0
    stream = iter_propagation(p0, coupling, config, lambdas=lambdas, workers=workers)
    for step, result in enumerate(stream, start=1):
        if step >= int(steps):
            break
    return result


def aggregate_features(coupling: CouplingMatrix, features: np.ndarray, k: int,
                       *, workers: int = 1) -> np.ndarray:
    """Ŝ^k X by k plain products (no residual), computed once before training."""
    out = np.asarray(features, dtype=np.float64)
    for _ in range(k):
        out = spmm(coupling, out, workers=workers)
    return out


def final_labels(p: PredictionMatrix | np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    rows = p.rows if isinstance(p, PredictionMatrix) else np.asarray(p)
    return np.argmax(rows, axis=1).astype(np.int64)


# ───────────────────────── choosing K ───────────────────────────────────────
def pick_best_k(scores: Iterable[float], *, patience: int,
                max_k: int) -> tuple[int, list[float]]:
    """
    Consume scores for k = 0, 1, … until *patience* consecutive steps bring
    no improvement or k reaches *max_k*. Returns the best k (ties → smallest)
    and the scores actually consumed.
    """
    trace: list[float] = []
    best_k, best, stale = 0, -np.inf, 0
    for k, score in enumerate(scores):
        trace.append(float(score))
        if score > best:
            best_k, best, stale = k, score, 0
        else:
            stale += 1
        if stale >= patience or k >= max_k:
            break
    return best_k, trace


def select_k(p0: PredictionMatrix, coupling: CouplingMatrix,
             config: PropagationConfig, val_labels: np.ndarray,
             val_indices: np.ndarray, *, workers: int = 1) -> KSelection:
    """Validation-driven K in [0, max_k]; intermediate P(k) are reused, never recomputed."""
    val_indices = np.asarray(val_indices, dtype=np.int64).reshape(-1)
    val_labels = np.asarray(val_labels, dtype=np.int64).reshape(-1)
    if val_indices.size == 0:
        raise InputError("select_k needs a non-empty validation set")
    if val_labels.size != val_indices.size:
        raise ContractError(f"{val_labels.size} labels for {val_indices.size} validation nodes")

    kept: dict[int, PredictionMatrix] = {}
    best_seen = {"score": -np.inf}

    def _scores() -> Iterator[float]:
        stream = iter_propagation(p0, coupling, config, workers=workers)
        current, step = p0, 0
        while True:
            score = float(np.mean(final_labels(current)[val_indices] == val_labels))
            if score > best_seen["score"]:
                best_seen["score"] = score
                kept.clear()
                kept[step] = current
            yield score
            current, step = next(stream), step + 1

    best_k, trace = pick_best_k(_scores(), patience=config.patience, max_k=config.max_k)
    logger.debug("select_k trace %s → K=%d", [round(s, 4) for s in trace], best_k)
    return KSelection(best_k=best_k, predictions=kept[best_k], trace=trace)
