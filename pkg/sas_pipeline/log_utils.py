"""Package logger (stderr console) plus an optional daily rotating run log."""
from __future__ import annotations
import logging, sys
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path
from typing import Dict

ROOT_NAME = "sas_pipeline"

_FMT = logging.Formatter(
    "%(asctime)s [%(levelname)s] %(name)s – %(message)s",
    "%Y-%m-%d %H:%M:%S",
)
_FILE_HANDLERS: Dict[Path, logging.Handler] = {}


def _coerce_level(level) -> int:
    """Accept int or case-insensitive name like 'debug'."""
    if isinstance(level, int):
        return level
    try:
        return logging._nameToLevel[str(level).upper()]
    except KeyError:
        raise ValueError(f"Unknown log level {level!r}") from None


def _root() -> logging.Logger:
    root = logging.getLogger(ROOT_NAME)
    if not any(getattr(h, "_sas_console", False) for h in root.handlers):
        sh = logging.StreamHandler(sys.stderr)
        sh.setFormatter(_FMT)
        sh._sas_console = True       # type: ignore[attr-defined]
        root.addHandler(sh)
        root.propagate = False       # don’t double-print through the root logger
        if root.level == logging.NOTSET:
            root.setLevel(logging.INFO)
    return root


def get_logger(name: str, level: int | str | None = None) -> logging.Logger:
    """
    Return the logger for *name* (usually ``__name__``).

    Every logger lives under the ``sas_pipeline`` hierarchy, so the console
    handler and any run-log file handler are attached exactly once, on the
    package root. Passing *level* sets it on the package root.
    """
    root = _root()
    if level is not None:
        root.setLevel(_coerce_level(level))
    if name == ROOT_NAME or name.startswith(ROOT_NAME + "."):
        return logging.getLogger(name)
    return logging.getLogger(f"{ROOT_NAME}.{name}")


def attach_file_log(run_root: Path) -> Path | None:
    """
    Write the package log to ``<run_root>/logs/sas.log`` as well
    (rotated at UTC midnight, two weeks kept). Returns the log path, or
    **None** when the handler could not be created.
    """
    root = _root()
    log_dir = Path(run_root, "logs").resolve()
    log_path = log_dir / "sas.log"
    if log_path in _FILE_HANDLERS:
        return log_path
    try:
        log_dir.mkdir(parents=True, exist_ok=True)
        fh = TimedRotatingFileHandler(
            log_path,
            when="midnight",
            utc=True,
            backupCount=14,
            encoding="utf-8",
        )
    except OSError as exc:
        # console only – a missing log file never stops a run
        root.warning("Cannot create file handler in %s: %s", log_dir, exc)
        return None
    fh.setFormatter(_FMT)
    root.addHandler(fh)
    _FILE_HANDLERS[log_path] = fh
    return log_path


def detach_file_logs() -> None:
    """Close every run-log handler (used between CLI invocations in tests)."""
    root = logging.getLogger(ROOT_NAME)
    for fh in _FILE_HANDLERS.values():
        root.removeHandler(fh)
        fh.close()
    _FILE_HANDLERS.clear()
