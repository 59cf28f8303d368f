"""
sas_pipeline.io_utils
~~~~~~~~~~~~~~~~~~~~~
Dataset files and result writers:

* load_dataset / export_dataset – manifest + four plain-text files
* convert_cora                  – Planetoid-style ``.content`` / ``.cites``
* write_result_json / write_frame_csv / write_excel

File formats (UTF-8, 0-based indices):

    edges.tsv      "u<TAB>v" per line, '#' comments and blank lines ignored
    features.csv   N rows × D decimal floats, no header
    labels.tsv     "node<TAB>class" per line; absent nodes are unlabelled
    splits.json    {"train": [...], "val": [...], "test": [...]}
    node_ids.tsv   "index<TAB>external id" (only when ids are strings)
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .dataset import SPLIT_NAMES, UNLABELED, Dataset, Splits
from .errors import (
    ConfigError,
    DimensionMismatchError,
    InputError,
    MalformedLineError,
    UnknownClassError,
)
from .graph import Graph, build_graph
from .log_utils import get_logger
from .models import DatasetManifest, ExperimentResult

_log = get_logger(__name__)

EDGES_FILE = "edges.tsv"
FEATURES_FILE = "features.csv"
LABELS_FILE = "labels.tsv"
SPLITS_FILE = "splits.json"
NODE_IDS_FILE = "node_ids.tsv"
MANIFEST_FILE = "manifest.json"

CORA_SPLIT = (0.05, 0.18, 0.37)


# ───────────────────────── line-oriented readers ────────────────────────────
def _data_lines(path: Path) -> Iterable[tuple[int, list[str]]]:
    """(1-based line number, whitespace-split fields) for every data line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            yield lineno, text.split()


def _node_index(token: str, id_map: dict[str, int] | None, path: Path, lineno: int) -> int:
    if id_map is not None:
        try:
            return id_map[token]
        except KeyError:
            raise InputError(f"unknown node id {token!r}", path=path, line=lineno) from None
    try:
        return int(token)
    except ValueError:
        raise MalformedLineError(f"node id {token!r} is not an integer",
                                 path=path, line=lineno) from None


def read_node_ids(path: Path) -> dict[str, int]:
    """External id → dense index, from an ``index<TAB>id`` file."""
    path = Path(path)
    mapping: dict[str, int] = {}
    for lineno, fields in _data_lines(path):
        if len(fields) != 2:
            raise MalformedLineError("expected 'index<TAB>id'", path=path, line=lineno)
        index = _node_index(fields[0], None, path, lineno)
        if fields[1] in mapping:
            raise MalformedLineError(f"node id {fields[1]!r} listed twice", path=path, line=lineno)
        mapping[fields[1]] = index
    if sorted(mapping.values()) != list(range(len(mapping))):
        raise InputError("node indices must be exactly 0 … N-1", path=path)
    return mapping


def read_edge_list(path: Path, num_nodes: int,
                   id_map: dict[str, int] | None = None) -> Graph:
    path = Path(path)
    pairs: list[tuple[int, int]] = []
    lines: list[int] = []
    for lineno, fields in _data_lines(path):
        if len(fields) != 2:
            raise MalformedLineError(f"expected 2 fields, got {len(fields)}", path=path, line=lineno)
        u = _node_index(fields[0], id_map, path, lineno)
        v = _node_index(fields[1], id_map, path, lineno)
        pairs.append((u, v))
        lines.append(lineno)
    try:
        return build_graph(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), num_nodes,
                           line_numbers=lines)
    except InputError as exc:
        raise type(exc)(exc.detail, path=path, line=exc.line) from exc


def read_features(path: Path, num_nodes: int, feature_dim: int) -> np.ndarray:
    path = Path(path)
    try:
        frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
                            skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame()
    except pd.errors.ParserError as exc:
        raise MalformedLineError(f"ragged CSV – {exc}", path=path) from exc

    if frame.shape[0] != num_nodes:
        raise DimensionMismatchError(
            f"{frame.shape[0]} feature rows, manifest declares N={num_nodes}", path=path)
    if num_nodes == 0:
        return np.empty((0, feature_dim), dtype=np.float64)
    if frame.shape[1] != feature_dim:
        raise DimensionMismatchError(
            f"{frame.shape[1]} feature columns, manifest declares D={feature_dim}", path=path)

    raw = frame.to_numpy(dtype=object)
    try:
        x = raw.astype(np.float64)
    except ValueError:
        for i, row in enumerate(raw):
            for cell in row:
                try:
                    float(cell)
                except ValueError:
                    raise MalformedLineError(f"{cell!r} is not a number",
                                             path=path, line=i + 1) from None
        raise
    bad = np.flatnonzero(~np.isfinite(x).all(axis=1))
    if bad.size:
        raise MalformedLineError("NaN or Inf feature value", path=path, line=int(bad[0]) + 1)
    return x


def read_labels(path: Path, num_nodes: int, num_classes: int,
                id_map: dict[str, int] | None = None,
                class_names: Sequence[str] | None = None) -> np.ndarray:
    path = Path(path)
    by_name = {name: i for i, name in enumerate(class_names or [])}
    labels = np.full(num_nodes, UNLABELED, dtype=np.int64)
    for lineno, fields in _data_lines(path):
        if len(fields) != 2:
            raise MalformedLineError("expected 'node<TAB>class'", path=path, line=lineno)
        node = _node_index(fields[0], id_map, path, lineno)
        if not 0 <= node < num_nodes:
            raise InputError(f"node {node} outside [0, {num_nodes})", path=path, line=lineno)
        if fields[1] in by_name:
            cls = by_name[fields[1]]
        else:
            try:
                cls = int(fields[1])
            except ValueError:
                raise MalformedLineError(f"class {fields[1]!r} is not an integer",
                                         path=path, line=lineno) from None
        if not 0 <= cls < num_classes:
            raise UnknownClassError(f"class {cls} outside [0, {num_classes})",
                                    path=path, line=lineno)
        if labels[node] != UNLABELED:
            raise MalformedLineError(f"node {node} labelled twice", path=path, line=lineno)
        labels[node] = cls
    return labels


def read_splits(path: Path) -> Splits:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedLineError(exc.msg, path=path, line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise MalformedLineError("splits file must hold a JSON object", path=path, line=1)
    unknown = sorted(set(raw) - set(SPLIT_NAMES))
    if unknown:
        raise MalformedLineError(f"unknown split name(s) {unknown}", path=path, line=1)
    parts = {}
    for name in SPLIT_NAMES:
        values = raw.get(name, [])
        if not isinstance(values, list) or not all(
                isinstance(v, int) and not isinstance(v, bool) for v in values):
            raise MalformedLineError(f"split {name!r} must be a list of integers", path=path)
        parts[name] = values
    return Splits(**parts)


# ───────────────────────── manifest loader ──────────────────────────────────
def read_manifest(path: Path) -> DatasetManifest:
    path = Path(path)
    try:
        return DatasetManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise ConfigError(f"{path}: invalid dataset manifest – {exc}") from exc


def load_dataset(manifest_path: Path) -> tuple[Graph, Dataset]:
    """
    Read and validate every file a dataset manifest points at.

    All invariants are checked eagerly; each failure is an **InputError**
    subclass naming the offending file (and line where one applies).
    """
    manifest_path = Path(manifest_path)
    m = read_manifest(manifest_path)
    base = manifest_path.resolve().parent

    id_map = read_node_ids(base / m.node_ids) if m.node_ids else None
    if id_map is not None and len(id_map) != m.num_nodes:
        raise DimensionMismatchError(
            f"{len(id_map)} node ids, manifest declares N={m.num_nodes}", path=base / m.node_ids)
    if m.class_names is not None and len(m.class_names) != m.num_classes:
        raise DimensionMismatchError(
            f"{len(m.class_names)} class names, manifest declares C={m.num_classes}",
            path=manifest_path)

    features = read_features(base / m.features, m.num_nodes, m.feature_dim)
    labels = read_labels(base / m.labels, m.num_nodes, m.num_classes, id_map, m.class_names)
    splits = read_splits(base / m.splits)
    graph = read_edge_list(base / m.edges, m.num_nodes, id_map)

    dataset = Dataset(features, labels, m.num_classes, splits, name=m.name)
    try:
        dataset.validate()
    except InputError as exc:
        raise type(exc)(exc.detail, path=base / m.splits) from exc

    _log.info("Loaded %s: N=%d D=%d C=%d, %d edges (after dedup), splits %d/%d/%d",
              m.name, m.num_nodes, m.feature_dim, m.num_classes, graph.num_edges,
              splits.train.size, splits.val.size, splits.test.size)
    return graph, dataset


# ───────────────────────── exporter ─────────────────────────────────────────
def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def export_dataset(graph: Graph, dataset: Dataset, out_dir: Path, *,
                   name: str | None = None,
                   node_ids: Sequence[str] | None = None,
                   class_names: Sequence[str] | None = None) -> Path:
    """
    Write *graph* + *dataset* as the five dataset files and return the
    manifest path. Same inputs always give byte-identical files.
    """
    if graph.num_nodes != dataset.num_nodes:
        raise InputError(f"graph has {graph.num_nodes} nodes, dataset {dataset.num_nodes}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = list(node_ids) if node_ids is not None else None
    if ids is not None and len(ids) != dataset.num_nodes:
        raise InputError(f"{len(ids)} node ids for {dataset.num_nodes} nodes")

    def _ext(i: int) -> str:
        return ids[i] if ids is not None else str(i)

    edges = graph.edge_array()
    _write_text(out_dir / EDGES_FILE,
                "".join(f"{_ext(u)}\t{_ext(v)}\n" for u, v in edges.tolist()))

    # repr-formatted floats read back bit-identically
    pd.DataFrame(dataset.features).to_csv(out_dir / FEATURES_FILE, header=False,
                                          index=False, lineterminator="\n")

    labelled = np.flatnonzero(dataset.labels != UNLABELED)
    label_text = "".join(
        f"{_ext(i)}\t{class_names[c] if class_names else c}\n"
        for i, c in zip(labelled.tolist(), dataset.labels[labelled].tolist())
    )
    _write_text(out_dir / LABELS_FILE, label_text)

    splits = {split: idx.tolist() for split, idx in dataset.splits.items()}
    _write_text(out_dir / SPLITS_FILE, json.dumps(splits) + "\n")

    if ids is not None:
        _write_text(out_dir / NODE_IDS_FILE,
                    "".join(f"{i}\t{ext}\n" for i, ext in enumerate(ids)))

    manifest = DatasetManifest(
        name=name or dataset.name,
        num_nodes=dataset.num_nodes,
        feature_dim=dataset.feature_dim,
        num_classes=dataset.num_classes,
        edges=EDGES_FILE,
        features=FEATURES_FILE,
        labels=LABELS_FILE,
        splits=SPLITS_FILE,
        node_ids=NODE_IDS_FILE if ids is not None else None,
        class_names=list(class_names) if class_names else None,
    )
    manifest_path = out_dir / MANIFEST_FILE
    _write_text(manifest_path, manifest.model_dump_json(indent=2, exclude_none=True) + "\n")
    _log.info("Exported %s → %s", manifest.name, manifest_path)
    return manifest_path


# ───────────────────────── Cora conversion ──────────────────────────────────
def convert_cora(content: Path, cites: Path, out_dir: Path, *, seed: int = 0,
                 fractions: tuple[float, float, float] = CORA_SPLIT,
                 name: str = "cora") -> Path:
    """
    Planetoid ``.content`` (id, binary features…, class name) and ``.cites``
    (cited id, citing id) → dataset files with a seeded random split.
    Citations naming an id absent from ``.content`` are dropped.
    """
    content, cites = Path(content), Path(cites)
    if sum(fractions) > 1.0 or min(fractions) < 0.0:
        raise ConfigError(f"split fractions {fractions} must be ≥ 0 and sum to ≤ 1")

    ids: list[str] = []
    rows: list[list[float]] = []
    classes: list[str] = []
    width = None
    for lineno, fields in _data_lines(content):
        if len(fields) < 3:
            raise MalformedLineError("expected 'id features… class'", path=content, line=lineno)
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise DimensionMismatchError(f"{len(fields)} fields, first row had {width}",
                                         path=content, line=lineno)
        try:
            rows.append([float(v) for v in fields[1:-1]])
        except ValueError:
            raise MalformedLineError("non-numeric feature", path=content, line=lineno) from None
        ids.append(fields[0])
        classes.append(fields[-1])
    if not ids:
        raise InputError("no nodes found", path=content)
    if len(set(ids)) != len(ids):
        raise InputError("duplicate paper id", path=content)

    class_names = sorted(set(classes))
    index = {ext: i for i, ext in enumerate(ids)}
    labels = np.array([class_names.index(c) for c in classes], dtype=np.int64)

    pairs, dropped = [], 0
    for lineno, fields in _data_lines(cites):
        if len(fields) != 2:
            raise MalformedLineError("expected 'cited<TAB>citing'", path=cites, line=lineno)
        if fields[0] in index and fields[1] in index:
            pairs.append((index[fields[0]], index[fields[1]]))
        else:
            dropped += 1
    if dropped:
        _log.warning("%s: dropped %d citation(s) naming unknown papers", cites.name, dropped)

    n = len(ids)
    graph = build_graph(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), n)
    order = np.random.default_rng(seed).permutation(n)
    sizes = [int(round(f * n)) for f in fractions]
    cuts = np.cumsum([0] + sizes)
    splits = Splits(train=np.sort(order[cuts[0]:cuts[1]]),
                    val=np.sort(order[cuts[1]:cuts[2]]),
                    test=np.sort(order[cuts[2]:cuts[3]]))
    dataset = Dataset(np.asarray(rows), labels, len(class_names), splits, name=name).validate()
    _log.info("Converted %s: N=%d D=%d C=%d, %d edges", name, n, dataset.feature_dim,
              dataset.num_classes, graph.num_edges)
    return export_dataset(graph, dataset, out_dir, name=name, node_ids=ids,
                          class_names=class_names)


# ───────────────────────── result writers ───────────────────────────────────
def write_result_json(result: ExperimentResult, path: Path, *,
                      include_timings: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_text(path, result.to_json(include_timings=include_timings) + "\n")
    return path


def write_results_json(results: Sequence[ExperimentResult], path: Path, *,
                       include_timings: bool = True) -> Path:
    """Several results as one JSON array."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    exclude = None if include_timings else {"timings_ms"}
    docs = [r.model_dump(mode="json", exclude=exclude, exclude_none=True) for r in results]
    _write_text(path, json.dumps(docs, indent=2) + "\n")
    return path


def write_frame_csv(df: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n")
    return path


def write_excel(excel_path: Path, cells: pd.DataFrame, summary: pd.DataFrame) -> Path:
    """One file, two sheets: Cells + Summary, no index."""
    excel_path = Path(excel_path)
    excel_path.parent.mkdir(parents=True, exist_ok=True)
    with pd.ExcelWriter(excel_path, engine="xlsxwriter") as xw:
        cells.to_excel(xw, sheet_name="Cells", index=False)
        summary.to_excel(xw, sheet_name="Summary", index=False)
        for sheet in xw.sheets.values():
            sheet.freeze_panes(1, 0)
    return excel_path
