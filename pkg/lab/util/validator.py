from lab.core.errors import ConfigError, GuardError


def require_positive(name: str, value: float | int | None) -> float | int:
    """
    Validate a strictly positive parameter. Raises ConfigError on failure.
    """
    if value is None:
        raise ConfigError(f"missing {name}")
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def require_non_negative(name: str, value: float | int | None) -> float | int:
    if value is None:
        raise ConfigError(f"missing {name}")
    if value < 0:
        raise ConfigError(f"{name} must be non-negative, got {value}")
    return value


def require_seed(seed: int | None) -> int:
    """
    Stochastic commands need an explicit non-negative 64-bit seed.
    """
    if seed is None:
        raise ConfigError("seed is mandatory for stochastic commands")
    if seed < 0 or seed >= 2**64:
        raise ConfigError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed


def require_within(name: str, value: float | int, limit: float | int) -> float | int:
    """
    Enforce a cost guard. Raises GuardError when `value` exceeds `limit`.
    """
    if value > limit:
        raise GuardError(f"{name}={value} exceeds guard {limit}")
    return value
