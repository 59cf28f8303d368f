# sas_pipeline/settings.py
from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Final

from dotenv import load_dotenv
from pydantic import ValidationError

from .errors import ConfigError
from .models import ExperimentManifest

ROOT: Final = Path(__file__).resolve().parent.parent
_LOG = logging.getLogger(__name__)

# a .env next to the project root (or in the CWD) fills in unset variables
load_dotenv(ROOT / ".env", override=False)
load_dotenv(override=False)

ENV_OUTPUT_ROOT: Final = "SAS_OUTPUT_ROOT"
ENV_LOG_LEVEL: Final = "SAS_LOG_LEVEL"
ENV_WORKERS: Final = "SAS_WORKERS"


# ───────────────────────── environment defaults ─────────────────────────────
def output_root() -> Path:
    """Default directory for CLI outputs (``$SAS_OUTPUT_ROOT`` or ./outputs)."""
    return Path(os.getenv(ENV_OUTPUT_ROOT) or "outputs").expanduser()


def log_level() -> str:
    return (os.getenv(ENV_LOG_LEVEL) or "INFO").upper()


def default_workers() -> int:
    raw = os.getenv(ENV_WORKERS)
    if not raw:
        return 1
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{ENV_WORKERS} must be an integer, got {raw!r}") from None
    if workers < 1:
        raise ConfigError(f"{ENV_WORKERS} must be ≥ 1, got {workers}")
    return workers


# ───────────────────────── experiment manifests ─────────────────────────────
def load_experiment_manifest(path: Path) -> ExperimentManifest:
    """
    Read a JSON experiment manifest and validate it completely.

    Relative dataset paths are resolved against the manifest's folder, so a
    manifest can be moved together with its data. Anything invalid raises
    **ConfigError** up-front instead of half-way through a sweep.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Cannot read experiment manifest {path} – {exc}") from exc

    try:
        manifest = ExperimentManifest.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: invalid experiment manifest – {exc}") from exc

    base = path.resolve().parent
    manifest = manifest.resolved(base)
    _LOG.info("Loaded experiment manifest %s (%d pipeline(s), %d seed(s))",
              path.name, len(manifest.pipelines), len(manifest.seeds))
    return manifest
