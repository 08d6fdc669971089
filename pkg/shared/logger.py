import os
from pathlib import Path
from loguru import logger

# Central logging helpers to fan logs into a shared file under logs/ while
# letting modules keep their own error sinks.
_global_sink_id: int | None = None
_module_sinks: set[str] = set()


def log_dir() -> Path:
    override = os.getenv("TREELAB_LOG_DIR")
    base = Path(override) if override else Path(__file__).resolve().parent.parent / "logs"
    base.mkdir(parents=True, exist_ok=True)
    return base


def ensure_global_logger() -> int:
    """
    Add a global log sink if it hasn't been added yet. Returns the sink id.
    """
    global _global_sink_id
    if _global_sink_id is None:
        _global_sink_id = logger.add(log_dir() / "global.log", rotation="10 MB", level="INFO")
    return _global_sink_id


def add_error_sink(module_file: str) -> None:
    """
    Add an ERROR-level sink that only receives records emitted from `module_file`
    (e.g. "coalescing.py"). Repeated calls for the same file are ignored.
    """
    if module_file in _module_sinks:
        return
    stem = module_file.rsplit(".", 1)[0]
    logger.add(
        log_dir() / f"{stem}_errors.log",
        rotation="1 MB",
        level="ERROR",
        filter=lambda r: r["file"].name == module_file,
    )
    _module_sinks.add(module_file)
