import os


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        return default


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        return default


TOOL_NAME: str = "treelab"
TOOL_VERSION: str = "1.0.0"

# Cost guards. Per-run overrides come from the [guards] section of a config file.
MAX_COALESCING_DEPTH: int = _env_int("TREELAB_MAX_COALESCING_DEPTH", 24)
MAX_VOTER_DEPTH: int = _env_int("TREELAB_MAX_VOTER_DEPTH", 14)
MAX_NODE_VISITS: int = _env_int("TREELAB_MAX_NODE_VISITS", 10_000_000)
MAX_LATTICE_SITES: int = _env_int("TREELAB_MAX_LATTICE_SITES", 1 << 22)
MAX_ISING_DEPTH: int = _env_int("TREELAB_MAX_ISING_DEPTH", 10)
MAX_INFECTION_DEPTH: int = _env_int("TREELAB_MAX_INFECTION_DEPTH", 40)
MAX_HORIZON: float = _env_float("TREELAB_MAX_HORIZON", 10_000.0)

# Quadrature grid defaults for the analytic module.
GRID_STEP: float = _env_float("TREELAB_GRID_STEP", 0.01)
GRID_T_MAX: float = _env_float("TREELAB_GRID_T_MAX", 15.0)

# Sample maps.
DEFAULT_WORKERS: int = _env_int("TREELAB_WORKERS", 1)
CHUNK_SIZE: int = _env_int("TREELAB_CHUNK_SIZE", 2000)
