"""Pydantic schemas: hyper-parameters, pipeline specs, manifests, results."""
from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ConfigError

FORMAT_VERSION = 1

KSetting = Union[int, Literal["auto"]]


class PropagationMode(str, Enum):
    NO_RESIDUAL = "no_residual"      # Λ = 0
    RESIDUAL = "residual"            # Λ = αI


class TaskKind(str, Enum):
    TRANSDUCTIVE = "transductive"
    INDUCTIVE = "inductive"


# ───────────────────────── hyper-parameters ─────────────────────────────────
class MlpShape(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden_dim:   int   = Field(16, ge=1)
    dropout:      float = Field(0.0, ge=0.0, lt=1.0)
    weight_decay: float = Field(5e-4, ge=0.0)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(1e-2, gt=0.0)
    epochs:        int   = Field(500, ge=1)
    batch_size:    int   = Field(0, ge=0, description="0 ⇒ full batch")
    seed:          int   = 0
    beta1:         float = Field(0.9, ge=0.0, lt=1.0)
    beta2:         float = Field(0.999, ge=0.0, lt=1.0)
    eps:           float = Field(1e-8, gt=0.0)
    patience:      Optional[int] = Field(None, ge=1,
                                         description="early stop on val loss")


class PropagationConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    mode:     PropagationMode = PropagationMode.NO_RESIDUAL
    alpha:    float = Field(0.1, gt=0.0, le=1.0)
    k:        KSetting = 2
    max_k:    int = Field(20, ge=1)
    patience: int = Field(2, ge=1)

    @field_validator("k")
    @classmethod
    def _k_positive(cls, v: KSetting) -> KSetting:
        if v != "auto" and v < 1:
            raise ValueError("fixed K must be ≥ 1")
        return v

    @property
    def auto(self) -> bool:
        return self.k == "auto"


# ───────────────────────── pipeline spec ────────────────────────────────────
def parse_steps(steps: str | list[str] | tuple[str, ...]) -> tuple[str, ...]:
    """
    ``"T-T-A-A"`` → ``("T", "T", "A", "A")``.

    Raises **ConfigError** unless the sequence is non-empty, uses only T/A
    and has exactly one contiguous block of T steps.
    """
    if isinstance(steps, str):
        tokens = [t.strip().upper() for t in steps.replace(",", "-").split("-") if t.strip()]
    else:
        tokens = [str(t).strip().upper() for t in steps]
    if not tokens:
        raise ConfigError("pipeline needs at least one step")
    bad = sorted({t for t in tokens if t not in {"T", "A"}})
    if bad:
        raise ConfigError(f"unknown pipeline step(s) {bad}; use T and A")
    compact = "".join(tokens)
    blocks = [b for b in compact.split("A") if b]
    if len(blocks) != 1:
        raise ConfigError(
            f"steps {'-'.join(tokens)!r} must hold exactly one contiguous block of T steps"
        )
    return tuple(tokens)


class PipelineSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    steps:       tuple[Literal["T", "A"], ...]
    mlp:         MlpShape = MlpShape()
    train:       TrainConfig = TrainConfig()
    propagation: PropagationConfig = PropagationConfig()
    task:        TaskKind = TaskKind.TRANSDUCTIVE
    preset:      Optional[str] = None

    @field_validator("steps", mode="before")
    @classmethod
    def _parse(cls, v: Any) -> tuple[str, ...]:
        return parse_steps(v)

    @model_validator(mode="after")
    def _auto_needs_block(self) -> "PipelineSpec":
        if self.propagation.auto and self.post_k == 0:
            raise ValueError("K='auto' needs an aggregation block after the transform block")
        return self

    # derived -----------------------------------------------------------------
    @property
    def label(self) -> str:
        return "-".join(self.steps)

    @property
    def pre_k(self) -> int:
        return self.steps.index("T")

    @property
    def num_layers(self) -> int:
        return self.steps.count("T")

    @property
    def post_k(self) -> int:
        return len(self.steps) - self.pre_k - self.num_layers

    @property
    def auto_k(self) -> bool:
        return self.propagation.auto and self.post_k > 0

    def with_seed(self, seed: int) -> "PipelineSpec":
        return self.model_copy(update={"train": self.train.model_copy(update={"seed": seed})})


# ───────────────────────── synthetic data ───────────────────────────────────
class SynthConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind:             Literal["xor", "gaussian"]
    n_train:          int   = Field(100, ge=1)
    n_val:            int   = Field(0, ge=0)
    n_test:           int   = Field(1000, ge=1)
    homophily_ratio:  float = Field(0.8, gt=0.0, lt=1.0)
    intra_avg_degree: float = Field(3.0, ge=0.0)
    seed:             int   = 0


# ───────────────────────── manifests ────────────────────────────────────────
class DatasetManifest(BaseModel):
    """Points at the four dataset files; paths are relative to the manifest."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    format_version: int = FORMAT_VERSION
    name:           str
    num_nodes:      int = Field(ge=0)
    feature_dim:    int = Field(ge=1)
    num_classes:    int = Field(ge=1)
    edges:          str
    features:       str
    labels:         str
    splits:         str
    node_ids:       Optional[str] = None
    class_names:    Optional[list[str]] = None

    @field_validator("format_version")
    @classmethod
    def _known_version(cls, v: int) -> int:
        if v != FORMAT_VERSION:
            raise ValueError(f"unsupported dataset format_version {v}")
        return v


class PipelineEntry(BaseModel):
    """One pipeline inside an experiment manifest: a preset or a steps string."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    preset: Optional[str] = None
    steps:  Optional[str] = None
    layers: Optional[int] = Field(None, ge=1)
    k:      Optional[KSetting] = None

    @model_validator(mode="after")
    def _one_source(self) -> "PipelineEntry":
        if (self.preset is None) == (self.steps is None):
            raise ValueError("give exactly one of 'preset' or 'steps'")
        return self


class ExperimentManifest(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    format_version: int = FORMAT_VERSION
    dataset:        str
    test_dataset:   Optional[str] = None
    pipelines:      list[PipelineEntry] = Field(min_length=1)
    mlp:            MlpShape = MlpShape()
    train:          TrainConfig = TrainConfig()
    propagation:    PropagationConfig = PropagationConfig()
    seeds:          list[int] = Field(default_factory=lambda: [0], min_length=1)
    output:         Optional[str] = None

    def resolved(self, base: Path) -> "ExperimentManifest":
        def _abs(p: str | None) -> str | None:
            if p is None:
                return None
            q = Path(p).expanduser()
            return str(q if q.is_absolute() else (base / q).resolve())
        return self.model_copy(update={
            "dataset": _abs(self.dataset),
            "test_dataset": _abs(self.test_dataset),
            "output": _abs(self.output),
        })


# ───────────────────────── results & checkpoints ────────────────────────────
class SplitMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    accuracy: float = Field(ge=0.0, le=1.0)
    micro_f1: float = Field(ge=0.0, le=1.0)
    count:    int = Field(ge=1)


class ExperimentResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    format_version: int = FORMAT_VERSION
    pipeline:   str
    preset:     Optional[str] = None
    task:       TaskKind
    dataset:    str
    seed:       int
    metrics:    dict[str, SplitMetrics]
    chosen_k:   Optional[int] = None
    k_trace:    Optional[list[float]] = None
    best_epoch: Optional[int] = None
    epochs_run: int = 0
    config:     dict[str, Any]
    timings_ms: Optional[dict[str, float]] = None

    def payload(self) -> dict[str, Any]:
        """Everything except wall-clock timings – identical across reruns."""
        return self.model_dump(mode="json", exclude={"timings_ms"}, exclude_none=True)

    def to_json(self, *, include_timings: bool = True) -> str:
        exclude = None if include_timings else {"timings_ms"}
        return self.model_dump_json(indent=2, exclude=exclude, exclude_none=True)


class LayerBlob(BaseModel):
    model_config = ConfigDict(frozen=True)

    shape:  tuple[int, int]
    weight: list[float]
    bias:   list[float]

    @model_validator(mode="after")
    def _sizes(self) -> "LayerBlob":
        rows, cols = self.shape
        if len(self.weight) != rows * cols or len(self.bias) != cols:
            raise ValueError(f"layer blob sizes do not match shape {self.shape}")
        return self


class ModelCheckpoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    format_version: int = FORMAT_VERSION
    layers: list[LayerBlob] = Field(min_length=1)
    mlp:    MlpShape
    train:  Optional[TrainConfig] = None
    seed:   int = 0
